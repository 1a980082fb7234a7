#include "declassify/vtables.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace declassify {

std::string_view to_string(Rejection r) {
  switch (r) {
    case Rejection::BadOffsetToTop: return "BadOffsetToTop";
    case Rejection::BadRttiSlot: return "BadRttiSlot";
    case Rejection::NoFunctionEntries: return "NoFunctionEntries";
  }
  return "Rejection";
}

namespace {

constexpr int kMaxConsecutiveNulls = 2;

std::optional<Rejection> check_header(Address candidate, const ElfImage& image) {
  auto ott = image.read_u64(candidate - 16);
  if (!ott) return Rejection::BadOffsetToTop;
  auto value = static_cast<std::int64_t>(*ott);
  if (value > 0 || value < -kMaxObjectSpan) return Rejection::BadOffsetToTop;
  auto rtti = image.read_u64(candidate - 8);
  if (!rtti) return Rejection::BadRttiSlot;
  if (*rtti != 0 && !image.is_read_only(*rtti)) return Rejection::BadRttiSlot;
  return std::nullopt;
}

}  // namespace

Validation validate_vtable(Address candidate, const ElfImage& image, const std::set<Address>& claimed_headers) {
  if (candidate < 16) return Rejection::BadOffsetToTop;
  if (auto bad = check_header(candidate, image)) return *bad;

  VTable table;
  table.address = candidate;
  table.offset_to_top = static_cast<std::int64_t>(*image.read_u64(candidate - 16));
  if (auto rtti = *image.read_u64(candidate - 8); rtti != 0) table.rtti = rtti;

  int nulls = 0;
  for (Address slot = candidate;; slot += 8) {
    if (claimed_headers.contains(slot)) break;
    auto value = image.read_u64(slot);
    if (!value) break;
    if (*value == 0) {
      if (++nulls > kMaxConsecutiveNulls) break;
      table.vfptrs.push_back({EntryKind::null, 0});
      continue;
    }
    if (!image.is_executable(*value)) break;
    nulls = 0;
    table.vfptrs.push_back({EntryKind::function, *value});
  }
  while (!table.vfptrs.empty() && table.vfptrs.back().kind == EntryKind::null) table.vfptrs.pop_back();
  if (table.vfptrs.empty()) return Rejection::NoFunctionEntries;
  return table;
}

std::vector<VTable> extract_vtables(const ElfImage& image, std::span<const ImmediateHit> hits) {
  std::set<Address> candidates;
  for (const auto& h : hits) candidates.insert(h.value);

  // Only candidates with a plausible header may cut another table's run short.
  std::set<Address> claimed;
  for (Address c : candidates) {
    if (c < 16 || check_header(c, image)) continue;
    auto first = image.read_u64(c);
    if (first && (*first == 0 || image.is_executable(*first))) claimed.insert(c - 16);
  }

  std::vector<VTable> tables;
  for (Address c : candidates) {
    auto result = validate_vtable(c, image, claimed);
    if (auto* t = std::get_if<VTable>(&result)) tables.push_back(std::move(*t));
  }
  return tables;
}

VTableGrouping group_vtables(std::vector<VTable> tables) {
  std::sort(tables.begin(), tables.end(), [](const VTable& a, const VTable& b) { return a.address < b.address; });
  tables.erase(std::unique(tables.begin(), tables.end(),
                           [](const VTable& a, const VTable& b) { return a.address == b.address; }),
               tables.end());
  VTableGrouping out;
  for (auto& t : tables) {
    if (t.is_primary()) {
      CompleteObjectVTable group;
      group.id = class_at(t.address);
      group.primary = std::move(t);
      out.classes.push_back(std::move(group));
    } else if (out.classes.empty()) {
      out.orphans.push_back(std::move(t));
    } else {
      out.classes.back().secondaries.push_back(std::move(t));
    }
  }
  return out;
}

std::set<std::size_t> pure_virtual_profile(const VTable& table) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < table.vfptrs.size(); ++i)
    if (table.vfptrs[i].kind == EntryKind::pure) out.insert(i);
  return out;
}

std::optional<Address> detect_pure_handler(const ElfImage& image, std::span<const VTable> tables,
                                           std::optional<Address> override_addr) {
  if (override_addr) return override_addr;
  if (auto v = image.dynamic_symbol_value("__cxa_pure_virtual"); v && *v != 0) return v;

  std::map<Address, std::size_t> tables_containing;
  for (const auto& t : tables) {
    std::set<Address> seen;
    for (const auto& e : t.vfptrs) {
      if (e.kind != EntryKind::function) continue;
      const auto* s = image.section_at(e.target);
      if (s == nullptr || !s->name.starts_with(".plt")) continue;
      if (seen.insert(e.target).second) ++tables_containing[e.target];
    }
  }
  std::optional<Address> best;
  std::size_t best_count = 0;
  for (auto [addr, count] : tables_containing) {
    if (count > best_count) {
      best = addr;
      best_count = count;
    }
  }
  return best;
}

void mark_pure_entries(std::vector<VTable>& tables, Address handler) {
  for (auto& t : tables)
    for (auto& e : t.vfptrs)
      if (e.kind == EntryKind::function && e.target == handler) e.kind = EntryKind::pure;
}

ClassTable::ClassTable(std::vector<CompleteObjectVTable> classes) : classes_(std::move(classes)) {
  for (std::size_t i = 0; i < classes_.size(); ++i) {
    const auto& c = classes_[i];
    index_[c.id] = i;
    for (std::size_t t = 0; t < c.group_size(); ++t) {
      const auto& table = c.table(t);
      tables_[table.address] = TableRef{c.id, t, table.offset_to_top};
      for (const auto& e : table.vfptrs)
        if (e.kind == EntryKind::function) vfptr_targets_.insert(e.target);
    }
  }
}

const CompleteObjectVTable* ClassTable::find(ClassId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &classes_[it->second];
}

const CompleteObjectVTable& ClassTable::at(ClassId id) const {
  const auto* c = find(id);
  if (c == nullptr) throw Error(ErrorKind::UnknownClass, "no class with primary table " + hex0x(to_address(id)));
  return *c;
}

std::optional<ClassTable::TableRef> ClassTable::table(Address vtable_address) const {
  auto it = tables_.find(vtable_address);
  if (it == tables_.end()) return std::nullopt;
  return it->second;
}

std::size_t ClassTable::budget(ClassId id) const { return at(id).group_size(); }

void write_vtable_file(std::ostream& out, std::span<const VTable> tables) {
  out << "# T <vtable> <offset-to-top> <rtti|-> <entries: hex | 0 null | p pure>\n";
  for (const auto& t : tables) {
    out << "T " << hex(t.address) << ' ' << t.offset_to_top << ' ' << (t.rtti ? hex(*t.rtti) : "-");
    for (const auto& e : t.vfptrs) {
      switch (e.kind) {
        case EntryKind::function: out << ' ' << hex(e.target); break;
        case EntryKind::pure: out << " p"; break;
        case EntryKind::null: out << " 0"; break;
      }
    }
    out << '\n';
  }
}

std::vector<VTable> read_vtable_file(std::istream& in) {
  std::vector<VTable> tables;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string tag, addr, ott, rtti;
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::ParseError, "vtable file line " + std::to_string(lineno) + ": " + why);
    };
    if (!(fields >> tag >> addr >> ott >> rtti) || tag != "T") throw fail("expected `T <addr> <ott> <rtti>`");
    VTable t;
    auto a = parse_hex(addr);
    auto o = parse_int(ott);
    if (!a || !o) throw fail("bad address or offset");
    t.address = *a;
    t.offset_to_top = *o;
    if (rtti != "-") {
      auto r = parse_hex(rtti);
      if (!r) throw fail("bad rtti slot");
      if (*r != 0) t.rtti = *r;
    }
    std::string entry;
    while (fields >> entry) {
      if (entry == "p") {
        t.vfptrs.push_back({EntryKind::pure, 0});
      } else if (entry == "0") {
        t.vfptrs.push_back({EntryKind::null, 0});
      } else if (auto e = parse_hex(entry)) {
        t.vfptrs.push_back({EntryKind::function, *e});
      } else {
        throw fail("bad entry `" + entry + "`");
      }
    }
    if (t.vfptrs.empty()) throw fail("table without entries");
    tables.push_back(std::move(t));
  }
  return tables;
}

std::vector<VTable> load_vtable_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  return read_vtable_file(f);
}

}  // namespace declassify
