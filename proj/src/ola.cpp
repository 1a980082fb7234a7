#include "declassify/ola.hpp"

#include <algorithm>
#include <sstream>

namespace declassify {

std::string_view to_string(Orientation o) {
  switch (o) {
    case Orientation::a_derives_b: return "a_derives_b";
    case Orientation::b_derives_a: return "b_derives_a";
    case Orientation::unoriented: return "unoriented";
    case Orientation::contradiction: return "contradiction";
  }
  return "unoriented";
}

ObjectProfile derive_object_profile(const CompleteObjectVTable& cls, const FactsTable& facts) {
  ObjectProfile p;
  p.class_id = cls.id;
  std::set<std::int64_t> conflicted;

  for (std::size_t t = 0; t < cls.group_size(); ++t) {
    const auto& table = cls.table(t);
    std::int64_t shift = -table.offset_to_top;
    if (t > 0) p.secondary_offsets.insert(shift);
    p.table_displacements.push_back(shift);
    p.table_sizes.push_back(table.vfptrs.size());
    p.pure_profiles.push_back(pure_virtual_profile(table));
    std::set<std::size_t> concrete;
    std::set<Address> visited;
    for (std::size_t slot = 0; slot < table.vfptrs.size(); ++slot) {
      const auto& e = table.vfptrs[slot];
      if (e.kind != EntryKind::function) continue;
      concrete.insert(slot);
      if (!visited.insert(e.target).second) continue;
      auto it = facts.find(e.target);
      if (it == facts.end()) {
        p.coverage_complete = false;
        continue;
      }
      for (const auto& ev : it->second.events) {
        const auto* m = ev.member_access();
        if (m == nullptr || !m->base.is_arg0()) continue;
        std::int64_t off = m->base.offset + shift;
        if (off < 0 || conflicted.contains(off)) continue;
        auto [slot_it, fresh] = p.layout.emplace(off, m->type);
        if (fresh || slot_it->second == m->type) continue;
        if (slot_it->second == CoarseType::unknown) {
          slot_it->second = m->type;
        } else if (m->type != CoarseType::unknown) {
          p.diagnostics.push_back("type conflict at +" + std::to_string(off) + ": " +
                                  std::string(to_string(slot_it->second)) + " vs " + std::string(to_string(m->type)));
          slot_it->second = CoarseType::unknown;
          conflicted.insert(off);
        }
      }
    }
    p.concrete_slots.push_back(std::move(concrete));
  }

  // Every vptr location holds a vptr, whatever the access looked like.
  if (p.layout.contains(0)) p.layout[0] = CoarseType::vptr_slot;
  for (auto off : p.secondary_offsets)
    if (p.layout.contains(off)) p.layout[off] = CoarseType::vptr_slot;

  for (auto [off, type] : p.layout) p.min_object_size = std::max(p.min_object_size, off + width_of(type));
  return p;
}

ProfileMap derive_profiles(const ClassTable& classes, const FactsTable& facts) {
  ProfileMap out;
  for (const auto& c : classes.classes()) out.emplace(c.id, derive_object_profile(c, facts));
  return out;
}

namespace {

const ObjectProfile& profile_of(ClassId id, const ProfileMap& profiles) {
  auto it = profiles.find(id);
  if (it == profiles.end()) throw Error(ErrorKind::UnknownClass, "no profile for " + hex0x(to_address(id)));
  return it->second;
}

std::int64_t displacement_of(const ObjectProfile& p, std::size_t table) {
  return table < p.table_displacements.size() ? p.table_displacements[table] : 0;
}

/// `derived` holds a pure entry where `base` is concrete.
bool pure_against(const ObjectProfile& derived, std::size_t dt, const ObjectProfile& base, std::size_t bt) {
  for (auto slot : derived.pure_profiles.at(dt))
    if (base.concrete_slots.at(bt).contains(slot)) return true;
  return false;
}

bool layout_clash(const ObjectProfile& derived, std::int64_t disp, const ObjectProfile& base) {
  for (auto [off, type] : base.layout) {
    auto it = derived.layout.find(off + disp);
    if (it != derived.layout.end() && !compatible(it->second, type)) return true;
  }
  return false;
}

}  // namespace

Orientation orient(const OrientQuery& q, const ProfileMap& profiles) {
  const auto& a = profile_of(q.a, profiles);
  const auto& b = profile_of(q.b, profiles);
  bool complete = a.coverage_complete && b.coverage_complete;

  int votes_a = 0;  // for a_derives_b
  int votes_b = 0;

  bool a_pure = pure_against(a, q.a_table, b, q.b_table);
  bool b_pure = pure_against(b, q.b_table, a, q.a_table);
  if (a_pure != b_pure) (b_pure ? votes_a : votes_b) += 1;

  auto sa = a.table_sizes.at(q.a_table);
  auto sb = b.table_sizes.at(q.b_table);
  if (sa != sb) (sa > sb ? votes_a : votes_b) += 1;

  if (complete && a.min_object_size != b.min_object_size)
    (a.min_object_size > b.min_object_size ? votes_a : votes_b) += 1;

  bool veto_a = complete && layout_clash(a, displacement_of(a, q.a_table), b);
  bool veto_b = complete && layout_clash(b, displacement_of(b, q.b_table), a);

  if (votes_a > 0 && votes_b > 0) return Orientation::contradiction;
  if (veto_a && veto_b) return Orientation::contradiction;
  if (votes_a > 0) return veto_a ? Orientation::contradiction : Orientation::a_derives_b;
  if (votes_b > 0) return veto_b ? Orientation::contradiction : Orientation::b_derives_a;
  return Orientation::unoriented;
}

std::string veto_reason(ClassId derived, std::size_t derived_table, ClassId base, const ProfileMap& profiles) {
  const auto& d = profile_of(derived, profiles);
  const auto& b = profile_of(base, profiles);
  if (derived_table >= d.table_sizes.size()) derived_table = 0;
  if (pure_against(d, derived_table, b, 0)) return "pure_virtual";
  if (d.table_sizes[derived_table] < b.table_sizes[0]) return "table_size";
  if (d.coverage_complete && b.coverage_complete) {
    if (d.min_object_size < b.min_object_size) return "object_size";
    if (layout_clash(d, displacement_of(d, derived_table), b)) return "layout";
  }
  return {};
}

bool check_secondary_offset(ClassId derived, std::int64_t offset, ClassId base, const ProfileMap& profiles) {
  profile_of(base, profiles);
  return profile_of(derived, profiles).secondary_offsets.contains(offset);
}

std::string format_profile(const ObjectProfile& p) {
  std::ostringstream out;
  out << "class " << hex0x(to_address(p.class_id)) << " size>=" << p.min_object_size << " tables=";
  for (std::size_t i = 0; i < p.table_sizes.size(); ++i) out << (i ? "," : "") << p.table_sizes[i];
  out << " pure=";
  for (std::size_t i = 0; i < p.pure_profiles.size(); ++i) {
    if (i) out << ';';
    if (p.pure_profiles[i].empty()) out << '-';
    bool first = true;
    for (auto s : p.pure_profiles[i]) {
      out << (first ? "" : ",") << s;
      first = false;
    }
  }
  out << " layout=";
  if (p.layout.empty()) out << '-';
  bool first = true;
  for (auto [off, type] : p.layout) {
    out << (first ? "" : ",") << off << ':' << to_string(type);
    first = false;
  }
  if (!p.coverage_complete) out << " coverage=partial";
  return out.str();
}

}  // namespace declassify
