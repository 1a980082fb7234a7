#include "declassify/ctor_dtor.hpp"

#include <algorithm>

namespace declassify {

std::string_view to_string(FunctionKind k) {
  switch (k) {
    case FunctionKind::ctor: return "ctor";
    case FunctionKind::dtor: return "dtor";
    case FunctionKind::inlined_host: return "inlined_host";
    case FunctionKind::other: return "other";
  }
  return "other";
}

std::string_view to_string(CandidateSource s) {
  switch (s) {
    case CandidateSource::ctor_call: return "ctor_call";
    case CandidateSource::ctor_inline: return "ctor_inline";
    case CandidateSource::dtor_call: return "dtor_call";
    case CandidateSource::dtor_inline: return "dtor_inline";
    case CandidateSource::overwrite: return "overwrite";
  }
  return "overwrite";
}

Classification classify_functions(const FactsTable& facts, const ClassTable& classes) {
  Classification out;
  for (const auto& [addr, fn] : facts) {
    ClassifiedFunction cf;
    cf.address = addr;
    std::vector<const OwnVptrWrite*> zero;
    for (const auto& e : fn.events)
      if (const auto* w = e.vptr_write()) cf.own_vptr_writes.push_back({e.seq, w->base, w->vtable});
    for (const auto& w : cf.own_vptr_writes) {
      auto ref = classes.table(w.vtable);
      if (ref && ref->is_primary() && w.base.is_arg0() && w.base.offset == 0) zero.push_back(&w);
    }

    if (zero.empty()) {
      cf.kind = cf.own_vptr_writes.empty() ? FunctionKind::other : FunctionKind::inlined_host;
      if (cf.kind == FunctionKind::inlined_host) cf.diagnostic = "no primary vptr write at (a0,+0)";
    } else {
      bool in_vtable = classes.is_virtual_target(addr);
      bool deletes = std::any_of(fn.events.begin(), fn.events.end(), [](const FactEvent& e) { return e.is_delete(); });
      cf.kind = (in_vtable || deletes) ? FunctionKind::dtor : FunctionKind::ctor;
      const auto* coi = cf.kind == FunctionKind::ctor ? zero.back() : zero.front();
      cf.owner = classes.table(coi->vtable)->owner;
      cf.coi_seq = coi->seq;
    }
    out.emplace(addr, std::move(cf));
  }

  // Test 3 is diagnostic only: it needs the first-pass kinds of callees.
  for (auto& [addr, cf] : out) {
    if (cf.kind != FunctionKind::ctor && cf.kind != FunctionKind::dtor) continue;
    auto first_write = cf.own_vptr_writes.front().seq;
    for (const auto& e : facts.at(addr).events) {
      if (e.seq >= first_write) break;
      const auto* c = e.call();
      if (c == nullptr || !c->target) continue;
      auto it = out.find(*c->target);
      if (it != out.end() && it->first != addr &&
          (it->second.kind == FunctionKind::ctor || it->second.kind == FunctionKind::dtor)) {
        cf.pattern_violation = true;
        cf.diagnostic = "known ctor/dtor called before first own vptr write";
        break;
      }
    }
  }
  return out;
}

namespace {

/// A sub-object reached from argument 0: the class and its displacement.
struct SubObject {
  ClassId cls{};
  std::int64_t offset = 0;
  std::uint64_t seq = 0;
  bool via_call = false;
};

std::optional<SubObject> resolve_write(const VptrWrite& w, std::uint64_t seq, const ClassTable& classes) {
  auto ref = classes.table(w.vtable);
  if (!ref) return std::nullopt;
  std::int64_t at = w.base.offset - (ref->is_primary() ? 0 : ref->displacement());
  if (at < 0) return std::nullopt;
  return SubObject{ref->owner, at, seq, false};
}

std::optional<SubObject> resolve_call(const CallEvent& c, std::uint64_t seq, const Classification& classified,
                                      FunctionKind wanted) {
  if (!c.target || !c.this_arg.is_arg0() || c.this_arg.offset < 0) return std::nullopt;
  auto it = classified.find(*c.target);
  if (it == classified.end() || it->second.kind != wanted || !it->second.owner) return std::nullopt;
  return SubObject{*it->second.owner, c.this_arg.offset, seq, true};
}

std::optional<std::pair<std::int64_t, SubObject>> resolve_event(const FactEvent& e, const Classification& classified,
                                                                const ClassTable& classes, FunctionKind callee) {
  if (const auto* w = e.vptr_write()) {
    if (!w->base.is_arg0()) return std::nullopt;
    if (auto s = resolve_write(*w, e.seq, classes)) return std::pair{w->base.offset, *s};
  } else if (const auto* c = e.call()) {
    if (auto s = resolve_call(*c, e.seq, classified, callee)) return std::pair{c->this_arg.offset, *s};
  }
  return std::nullopt;
}

InheritanceCandidate make_candidate(ClassId owner, const SubObject& s, Address fn, bool ctor) {
  InheritanceCandidate c;
  c.derived = owner;
  c.base = s.cls;
  c.source = ctor ? (s.via_call ? CandidateSource::ctor_call : CandidateSource::ctor_inline)
                  : (s.via_call ? CandidateSource::dtor_call : CandidateSource::dtor_inline);
  if (s.offset > 0) c.secondary_offset = s.offset;
  c.function = fn;
  c.seq = s.seq;
  return c;
}

}  // namespace

std::vector<InheritanceCandidate> ctor_analysis(const FactsTable& facts, const Classification& classified,
                                                const ClassTable& classes) {
  std::vector<InheritanceCandidate> out;
  for (const auto& [addr, cf] : classified) {
    if (cf.kind != FunctionKind::ctor) continue;
    // Per written location, the last sub-object set up before COI is the
    // direct base there; earlier writes belong to that base's own bases.
    std::map<std::int64_t, SubObject> last;
    for (const auto& e : facts.at(addr).events) {
      if (e.seq >= *cf.coi_seq) break;
      auto r = resolve_event(e, classified, classes, FunctionKind::ctor);
      if (r && r->second.cls != *cf.owner) last[r->first] = r->second;
    }
    std::set<std::pair<ClassId, std::int64_t>> seen;
    std::vector<SubObject> bases;
    for (const auto& [loc, s] : last)
      if (seen.insert({s.cls, s.offset}).second) bases.push_back(s);
    std::sort(bases.begin(), bases.end(), [](const SubObject& a, const SubObject& b) { return a.seq < b.seq; });
    for (const auto& s : bases) out.push_back(make_candidate(*cf.owner, s, addr, true));
  }
  return out;
}

std::vector<InheritanceCandidate> dtor_analysis(const FactsTable& facts, const Classification& classified,
                                                const ClassTable& classes, const AnalysisOptions& options) {
  std::vector<InheritanceCandidate> out;
  for (const auto& [addr, cf] : classified) {
    if (cf.kind != FunctionKind::dtor) continue;
    const auto& events = facts.at(addr).events;
    auto in_window = [&](const FactEvent& e) {
      return options.alg2_literal ? e.seq <= *cf.coi_seq : e.seq > *cf.coi_seq;
    };
    // Per location, the first foreign sub-object torn down after our own
    // vptr writes is the direct base there.
    std::map<std::int64_t, SubObject> first;
    for (const auto& e : events) {
      if (!in_window(e)) continue;
      auto r = resolve_event(e, classified, classes, FunctionKind::dtor);
      if (!r || r->second.cls == *cf.owner) continue;
      first.try_emplace(r->first, r->second);
    }
    // Composed members never sit where the owner keeps a vptr, so only
    // offset 0 and secondary-table displacements can hold a base.
    std::set<std::int64_t> base_slots{0};
    for (const auto& t : classes.at(*cf.owner).secondaries) base_slots.insert(-t.offset_to_top);
    std::set<std::pair<ClassId, std::int64_t>> seen;
    std::vector<SubObject> items;
    for (const auto& [loc, s] : first)
      if (base_slots.contains(s.offset) && seen.insert({s.cls, s.offset}).second) items.push_back(s);
    std::sort(items.begin(), items.end(), [](const SubObject& a, const SubObject& b) { return a.seq < b.seq; });

    auto remaining = static_cast<std::int64_t>(classes.budget(*cf.owner));
    for (auto it = items.rbegin(); it != items.rend() && remaining > 0; ++it) {
      auto size = static_cast<std::int64_t>(classes.budget(it->cls));
      auto c = make_candidate(*cf.owner, *it, addr, false);
      c.needs_corroboration = size > remaining;
      remaining -= size;
      out.push_back(c);
    }
  }
  return out;
}

}  // namespace declassify
