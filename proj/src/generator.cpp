#include "declassify/generator.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace declassify {

void GeneratorConfig::validate() const {
  if (classes < 0) throw Error(ErrorKind::InvalidConfig, "class count must be >= 0");
  const std::pair<const char*, double> rates[] = {
      {"root_rate", root_rate},           {"multi_rate", multi_rate},     {"composition_rate", composition_rate},
      {"abstract_rate", abstract_rate},   {"inline_rate", inline_rate},   {"ctor_elision", ctor_elision},
      {"dtor_elision", dtor_elision},     {"vtable_elision", vtable_elision},
  };
  for (const auto& [name, r] : rates)
    if (!(r >= 0.0 && r <= 1.0)) throw Error(ErrorKind::InvalidConfig, std::string(name) + " must be in [0,1]");
}

ClassTable Corpus::class_table() const { return ClassTable(group_vtables(tables).classes); }

std::string Corpus::gt_json() const {
  nlohmann::json j = nlohmann::json::parse(serialize_ground_truth(gt));
  j["edges"] = nlohmann::json::array();
  for (const auto& e : edges) {
    nlohmann::json je{{"derived", classes[e.derived].name},
                      {"base", classes[e.base].name},
                      {"kind", e.kind == EdgeKind::primary ? "primary" : "secondary"},
                      {"offset", e.offset}};
    auto ev = nlohmann::json::array();
    if (e.ctor) ev.push_back("ctor");
    if (e.dtor) ev.push_back("dtor");
    if (e.overwrite) ev.push_back("overwrite");
    je["evidence"] = ev;
    j["edges"].push_back(je);
  }
  j["object_sizes"] = nlohmann::json::object();
  for (const auto& c : classes) j["object_sizes"][c.name] = c.size;
  return j.dump(2) + "\n";
}

namespace {

constexpr Address kTextBase = 0x401000;
constexpr Address kFunctionStride = 0x10;
constexpr Address kDataBase = 0x800000;  // clear of any text the corpus can fill

// Fixed mapping from the engine so the stream does not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
  bool chance(double p) { return uniform() < p; }
  std::size_t below(std::size_t n) { return static_cast<std::size_t>(gen_() % n); }

 private:
  std::mt19937_64 gen_;
};

constexpr CoarseType kMemberTypes[] = {CoarseType::int32,    CoarseType::int64,   CoarseType::float64,
                                       CoarseType::data_ptr, CoarseType::int8,    CoarseType::float32};

std::int64_t align_up(std::int64_t v, std::int64_t a) { return (v + a - 1) / a * a; }

struct TableSpec {
  std::int64_t disp = 0;
  std::vector<VfptrEntry> slots;
};

/// Event stream written relative to the object under construction (a0).
struct Body {
  std::vector<EventPayload> events;
  std::set<int> ctor_bodies;  ///< classes whose ctor body is spliced or called in here
};

ThisExpr rebase(const ThisExpr& e, const ThisExpr& origin) {
  if (!e.is_arg0()) return e;
  return ThisExpr{origin.origin, origin.index, origin.offset + e.offset};
}

EventPayload rebase(const EventPayload& p, const ThisExpr& origin) {
  return std::visit(
      [&](const auto& v) -> EventPayload {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, VptrWrite>) return VptrWrite{rebase(v.base, origin), v.vtable};
        else if constexpr (std::is_same_v<T, CallEvent>) return CallEvent{v.target, rebase(v.this_arg, origin)};
        else if constexpr (std::is_same_v<T, MemberAccess>) return MemberAccess{rebase(v.base, origin), v.type, v.mode};
        else return v;
      },
      p);
}

void splice(Body& into, const Body& from, const ThisExpr& origin) {
  for (const auto& e : from.events) into.events.push_back(rebase(e, origin));
  into.ctor_bodies.insert(from.ctor_bodies.begin(), from.ctor_bodies.end());
}

class Builder {
 public:
  explicit Builder(const GeneratorConfig& c) : cfg_(c), rng_(c.seed) {}

  Corpus run() {
    corpus_.config = cfg_;
    int n = cfg_.classes;
    corpus_.classes.resize(n);
    tables_.resize(n);
    ancestors_.resize(n);
    for (int i = 0; i < n; ++i) shape(i);
    for (int i = 0; i < n; ++i) build_tables(i);
    place_tables();
    ctor_bodies_.resize(n);
    dtor_bodies_.resize(n);
    for (int i = 0; i < n; ++i) {
      ctor_bodies_[i] = make_ctor_body(i);
      dtor_bodies_[i] = make_dtor_body(i);
    }
    emit_functions();
    emit_hosts();
    compute_edges();
    finalize(corpus_.facts);
    return std::move(corpus_);
  }

 private:
  GeneratedClass& cls(int i) { return corpus_.classes[i]; }

  Address next_function() { return kTextBase + kFunctionStride * next_fn_++; }

  void shape(int i) {
    auto& c = cls(i);
    c.name = "c" + std::to_string(i);
    c.abstract = rng_.chance(cfg_.abstract_rate);
    c.vtable_elided = rng_.chance(cfg_.vtable_elision);
    c.ctor_emitted = !rng_.chance(cfg_.ctor_elision);
    c.dtor_empty = rng_.chance(cfg_.dtor_elision);
    ancestors_[i].insert(i);

    std::int64_t off = kPointerWidth;
    if (i > 0 && !rng_.chance(cfg_.root_rate)) {
      int p = static_cast<int>(rng_.below(i));
      c.primary_base = p;
      ancestors_[i].insert(ancestors_[p].begin(), ancestors_[p].end());
      off = cls(p).size;
      for (int k = 0; k < 3 && rng_.chance(cfg_.multi_rate); ++k) {
        int s = static_cast<int>(rng_.below(i));
        // A repeated sub-object would need virtual inheritance.
        bool disjoint = std::none_of(ancestors_[s].begin(), ancestors_[s].end(),
                                     [&](int a) { return ancestors_[i].contains(a); });
        if (!disjoint) continue;
        off = align_up(off, kPointerWidth);
        c.secondary_bases.emplace_back(s, off);
        off += cls(s).size;
        ancestors_[i].insert(ancestors_[s].begin(), ancestors_[s].end());
      }
    }
    auto members = 1 + rng_.below(3);
    for (std::size_t k = 0; k < members; ++k) {
      auto t = kMemberTypes[rng_.below(std::size(kMemberTypes))];
      off = align_up(off, width_of(t));
      c.members.emplace_back(off, t);
      off += width_of(t);
    }
    if (i > 0 && rng_.chance(cfg_.composition_rate)) {
      int m = static_cast<int>(rng_.below(i));
      if (!cls(m).abstract && !cls(m).vtable_elided) {
        off = align_up(off, kPointerWidth);
        c.composed.emplace_back(m, off);
        off += cls(m).size;
      }
    }
    c.size = align_up(off, kPointerWidth);
  }

  /// A virtual function of class `i`: touches the class's last own member.
  Address new_method(int i) {
    Address f = next_function();
    auto [off, type] = cls(i).members.back();
    methods_.push_back({f, {MemberAccess{ThisExpr::argument(0, off), type, AccessMode::read}}});
    return f;
  }

  Address new_thunk(Address target, std::int64_t disp) {
    Address f = next_function();
    methods_.push_back({f, {CallEvent{target, ThisExpr::argument(0, -disp)}}});
    return f;
  }

  void adopt(int i, TableSpec t) {
    auto& c = cls(i);
    t.slots.at(0) = {EntryKind::function, new_thunk(c.complete_dtor, t.disp)};
    t.slots.at(1) = {EntryKind::function, new_thunk(c.deleting_dtor, t.disp)};
    for (std::size_t j = 2; j < t.slots.size(); ++j)
      if (t.slots[j].kind == EntryKind::pure && !c.abstract)
        t.slots[j] = {EntryKind::function, new_thunk(new_method(i), t.disp)};
    tables_[i].push_back(std::move(t));
  }

  void build_tables(int i) {
    auto& c = cls(i);
    c.ctor = next_function();
    c.complete_dtor = next_function();
    c.deleting_dtor = next_function();

    TableSpec primary;
    if (c.primary_base) {
      primary.slots = tables_[*c.primary_base].front().slots;
      for (std::size_t j = 2; j < primary.slots.size(); ++j) {
        auto& s = primary.slots[j];
        if (s.kind == EntryKind::pure ? !c.abstract : rng_.chance(0.25)) s = {EntryKind::function, new_method(i)};
      }
    } else {
      primary.slots.resize(2);
    }
    primary.slots[0] = {EntryKind::function, c.complete_dtor};
    primary.slots[1] = {EntryKind::function, c.deleting_dtor};
    // Every class introduces at least one virtual, so its primary table is
    // strictly longer than its primary base's.
    auto fresh = 1 + rng_.below(2);
    for (std::size_t k = 0; k < fresh; ++k)
      primary.slots.push_back(c.abstract ? VfptrEntry{EntryKind::pure, 0} : VfptrEntry{EntryKind::function, new_method(i)});
    tables_[i].push_back(std::move(primary));

    if (c.primary_base) {
      const auto& pt = tables_[*c.primary_base];
      for (std::size_t t = 1; t < pt.size(); ++t) adopt(i, pt[t]);
    }
    for (auto [s, d] : c.secondary_bases) {
      for (auto t : tables_[s]) {
        t.disp += d;
        adopt(i, std::move(t));
      }
    }
    c.group_size = tables_[i].size();
  }

  void place_tables() {
    Address cursor = kDataBase;
    vt_addr_.resize(corpus_.classes.size());
    for (std::size_t i = 0; i < corpus_.classes.size(); ++i) {
      if (cls(static_cast<int>(i)).vtable_elided) continue;
      for (const auto& t : tables_[i]) {
        cursor += 2 * kPointerWidth;
        VTable vt;
        vt.address = cursor;
        vt.offset_to_top = -t.disp;
        vt.vfptrs = t.slots;
        vt_addr_[i].push_back(cursor);
        cursor += kPointerWidth * t.slots.size();
        corpus_.tables.push_back(std::move(vt));
      }
      cls(static_cast<int>(i)).primary_vtable = vt_addr_[i].front();
    }
  }

  void own_writes(int i, Body& b) {
    if (cls(i).vtable_elided) return;
    for (std::size_t t = 0; t < tables_[i].size(); ++t)
      b.events.push_back(VptrWrite{ThisExpr::argument(0, tables_[i][t].disp), vt_addr_[i][t]});
  }

  /// Constructs sub-object `k` at `at`: a call, or the callee's body spliced in.
  void ctor_site(int k, const ThisExpr& at, Body& b) {
    const auto& c = cls(k);
    if (c.ctor_emitted && !c.vtable_elided && !rng_.chance(cfg_.inline_rate)) {
      b.events.push_back(CallEvent{c.ctor, at});
      b.ctor_bodies.insert(k);
    } else {
      splice(b, ctor_bodies_[k], at);
    }
  }

  void dtor_site(int k, const ThisExpr& at, Body& b) {
    const auto& c = cls(k);
    if (c.dtor_empty) return;
    if (!c.vtable_elided && !rng_.chance(cfg_.inline_rate)) b.events.push_back(CallEvent{c.complete_dtor, at});
    else splice(b, dtor_bodies_[k], at);
  }

  Body make_ctor_body(int i) {
    const auto& c = cls(i);
    Body b;
    b.ctor_bodies.insert(i);
    if (c.primary_base) ctor_site(*c.primary_base, ThisExpr::argument(0, 0), b);
    for (auto [s, d] : c.secondary_bases) ctor_site(s, ThisExpr::argument(0, d), b);
    own_writes(i, b);
    for (auto [off, type] : c.members) b.events.push_back(MemberAccess{ThisExpr::argument(0, off), type, AccessMode::write});
    for (auto [m, off] : c.composed) ctor_site(m, ThisExpr::argument(0, off), b);
    return b;
  }

  Body make_dtor_body(int i) {
    const auto& c = cls(i);
    Body b;
    if (c.dtor_empty) return b;
    own_writes(i, b);
    auto [off, type] = c.members.front();
    b.events.push_back(MemberAccess{ThisExpr::argument(0, off), type, AccessMode::read});
    for (auto it = c.composed.rbegin(); it != c.composed.rend(); ++it)
      dtor_site(it->first, ThisExpr::argument(0, it->second), b);
    for (auto it = c.secondary_bases.rbegin(); it != c.secondary_bases.rend(); ++it)
      dtor_site(it->first, ThisExpr::argument(0, it->second), b);
    if (c.primary_base) dtor_site(*c.primary_base, ThisExpr::argument(0, 0), b);
    return b;
  }

  void add_function(Address addr, const std::vector<EventPayload>& events) {
    if (events.empty()) return;
    auto& fn = corpus_.facts[addr];
    fn.address = addr;
    for (const auto& e : events) append_event(fn, e);
  }

  void emit_functions() {
    for (std::size_t i = 0; i < corpus_.classes.size(); ++i) {
      const auto& c = corpus_.classes[i];
      if (c.vtable_elided) continue;
      if (c.ctor_emitted) {
        add_function(c.ctor, ctor_bodies_[i].events);
        appeared_.insert(ctor_bodies_[i].ctor_bodies.begin(), ctor_bodies_[i].ctor_bodies.end());
        ++corpus_.ctor_count;
      }
      if (!c.dtor_empty) ++corpus_.dtor_count;
      add_function(c.complete_dtor, dtor_bodies_[i].events);
      add_function(c.deleting_dtor, {CallEvent{c.complete_dtor, ThisExpr::argument(0, 0)}, DeleteCall{}});
    }
    for (const auto& [addr, events] : methods_) add_function(addr, events);
  }

  void emit_hosts() {
    std::vector<int> concrete;
    for (std::size_t i = 0; i < corpus_.classes.size(); ++i)
      if (!corpus_.classes[i].abstract && !corpus_.classes[i].vtable_elided) concrete.push_back(static_cast<int>(i));
    std::size_t next = 0;
    while (next < concrete.size()) {
      auto count = std::min(concrete.size() - next, 1 + rng_.below(3));
      Body host;
      for (std::size_t k = 0; k < count; ++k) {
        int i = concrete[next++];
        cls(i).instantiated = true;
        ctor_site(i, ThisExpr::allocation(static_cast<int>(k), 0), host);
      }
      add_function(next_function(), host.events);
      appeared_.insert(host.ctor_bodies.begin(), host.ctor_bodies.end());
    }
  }

  bool has_pure(int i) const {
    const auto& s = tables_[i].front().slots;
    return std::any_of(s.begin(), s.end(), [](const VfptrEntry& e) { return e.kind == EntryKind::pure; });
  }

  void compute_edges() {
    auto& gt = corpus_.gt;
    for (const auto& c : corpus_.classes) {
      gt.classes.insert(c.name);
      gt.name_to_vt[c.name] = c.primary_vtable;
    }
    auto add = [&](int d, int b, EdgeKind kind, std::int64_t off) {
      const auto& dc = cls(d);
      const auto& bc = cls(b);
      GeneratedEdge e{d, b, kind, off};
      if (!dc.vtable_elided && !bc.vtable_elided) {
        e.ctor = dc.ctor_emitted;
        e.dtor = !dc.dtor_empty && !bc.dtor_empty;
        // Full coverage needs every D1 in the group to have a body.
        bool complete = !dc.dtor_empty && !bc.dtor_empty;
        bool orientable = kind == EdgeKind::primary || complete || (has_pure(b) && !dc.abstract);
        e.overwrite = appeared_.contains(d) && orientable;
      }
      corpus_.edges.push_back(e);
      gt.edges.push_back({dc.name, bc.name, kind});
    };
    for (std::size_t i = 0; i < corpus_.classes.size(); ++i) {
      const auto& c = corpus_.classes[i];
      int d = static_cast<int>(i);
      if (c.primary_base) add(d, *c.primary_base, EdgeKind::primary, 0);
      for (auto [s, off] : c.secondary_bases) add(d, s, EdgeKind::secondary, off);
    }
  }

  const GeneratorConfig& cfg_;
  Rng rng_;
  Corpus corpus_;
  std::vector<std::vector<TableSpec>> tables_;
  std::vector<std::vector<Address>> vt_addr_;
  std::vector<std::set<int>> ancestors_;
  std::vector<Body> ctor_bodies_;
  std::vector<Body> dtor_bodies_;
  std::vector<std::pair<Address, std::vector<EventPayload>>> methods_;
  std::set<int> appeared_;
  std::uint64_t next_fn_ = 0;
};

}  // namespace

Corpus generate_corpus(const GeneratorConfig& config) {
  config.validate();
  return Builder(config).run();
}

Corpus running_example() {
  Corpus c;
  c.config.classes = 4;
  // Primary tables of A, B, C, D and D's secondary (B-in-D, offset-to-top -16).
  constexpr Address vt_a = 0x4011d0, vt_b = 0x4011e8, vt_c = 0x401208, vt_d = 0x401228, vt_d_b = 0x401248;
  constexpr Address d_ctor = 0x401500;
  auto table = [](Address at, std::int64_t ott, std::vector<Address> fns) {
    VTable t;
    t.address = at;
    t.offset_to_top = ott;
    for (auto f : fns) t.vfptrs.push_back({EntryKind::function, f});
    return t;
  };
  c.tables = {table(vt_a, 0, {0x401100}), table(vt_b, 0, {0x401110}), table(vt_c, 0, {0x401120, 0x401130}),
              table(vt_d, 0, {0x401140, 0x401150}), table(vt_d_b, -16, {0x401160})};

  const char* names[] = {"A", "B", "C", "D"};
  const Address vts[] = {vt_a, vt_b, vt_c, vt_d};
  const std::int64_t sizes[] = {16, 24, 16, 40};
  for (int i = 0; i < 4; ++i) {
    GeneratedClass g;
    g.name = names[i];
    g.primary_vtable = vts[i];
    g.size = sizes[i];
    g.ctor_emitted = i == 3;
    g.dtor_empty = true;
    g.group_size = i == 3 ? 2 : 1;
    c.classes.push_back(g);
    c.gt.classes.insert(g.name);
    c.gt.name_to_vt[g.name] = vts[i];
  }
  c.classes[3].primary_base = 2;
  c.classes[3].secondary_bases = {{1, 16}};
  c.classes[3].composed = {{0, 24}};
  c.classes[3].ctor = d_ctor;
  c.edges = {{3, 2, EdgeKind::primary, 0, true, false, false}, {3, 1, EdgeKind::secondary, 16, true, false, false}};
  c.gt.edges = {{"D", "C", EdgeKind::primary}, {"D", "B", EdgeKind::secondary}};

  // C() and B() inlined, then D's own vptrs, then the composed A().
  auto& fn = c.facts[d_ctor];
  fn.address = d_ctor;
  append_event(fn, VptrWrite{ThisExpr::argument(0, 0), vt_c});
  append_event(fn, VptrWrite{ThisExpr::argument(0, 16), vt_b});
  append_event(fn, VptrWrite{ThisExpr::argument(0, 0), vt_d});
  append_event(fn, VptrWrite{ThisExpr::argument(0, 16), vt_d_b});
  append_event(fn, VptrWrite{ThisExpr::argument(0, 24), vt_a});
  finalize(c.facts);
  c.ctor_count = 1;
  return c;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& prefix) {
  auto open = [&](const char* ext) {
    std::filesystem::path p = prefix;
    p += ext;
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error(ErrorKind::Usage, "cannot write " + p.string());
    return out;
  };
  {
    auto out = open(".facts");
    write_facts(out, corpus.facts);
  }
  {
    auto out = open(".vt");
    write_vtable_file(out, corpus.tables);
  }
  {
    auto out = open(".gt.json");
    out << corpus.gt_json();
  }
}

}  // namespace declassify
