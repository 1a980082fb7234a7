#include <doctest.h>

#include <map>
#include <random>

#include "declassify/generator.hpp"
#include "declassify/ola.hpp"
#include "support.hpp"

using namespace declassify;

namespace {

ObjectProfile synthetic(Address id, std::vector<std::size_t> sizes, std::int64_t min_size,
                        std::vector<std::set<std::size_t>> pure = {}) {
  ObjectProfile p;
  p.class_id = class_at(id);
  p.table_sizes = sizes;
  p.min_object_size = min_size;
  pure.resize(sizes.size());
  for (std::size_t t = 0; t < sizes.size(); ++t) {
    std::set<std::size_t> concrete;
    for (std::size_t s = 0; s < sizes[t]; ++s)
      if (!pure[t].contains(s)) concrete.insert(s);
    p.concrete_slots.push_back(concrete);
    p.table_displacements.push_back(0);
  }
  p.pure_profiles = pure;
  return p;
}

// Typed offsets reachable through a generated class's own and inherited members.
void flatten(const Corpus& c, int k, std::int64_t at, std::map<std::int64_t, CoarseType>& out) {
  const auto& cls = c.classes[k];
  out[at] = CoarseType::vptr_slot;
  if (cls.primary_base) flatten(c, *cls.primary_base, at, out);
  for (auto [b, disp] : cls.secondary_bases) flatten(c, b, at + disp, out);
  for (auto [off, type] : cls.members) out[at + off] = type;
}

std::size_t table_at(const ObjectProfile& p, std::int64_t disp) {
  for (std::size_t t = 0; t < p.table_displacements.size(); ++t)
    if (p.table_displacements[t] == disp) return t;
  return 0;
}

}  // namespace

TEST_CASE("single accessor profile") {
  auto classes = testing::classes_from("T 401000 0 - 402000\n");
  auto facts = testing::facts_from("M 402000 0 a0 0 code_ptr r\nM 402000 1 a0 8 int64 r\n");
  auto p = derive_object_profile(classes.classes()[0], facts);
  CHECK(p.layout == std::map<std::int64_t, CoarseType>{{0, CoarseType::vptr_slot}, {8, CoarseType::int64}});
  CHECK(p.min_object_size == 16);
  CHECK(p.coverage_complete);
}

TEST_CASE("no analyzable functions: empty layout, pointer-sized") {
  auto classes = testing::classes_from("T 401000 0 - 402000 402010\n");
  auto p = derive_object_profile(classes.classes()[0], FactsTable{});
  CHECK(p.layout.empty());
  CHECK(p.min_object_size == kPointerWidth);
  CHECK_FALSE(p.coverage_complete);
}

TEST_CASE("conflicting accesses fall back to unknown") {
  auto classes = testing::classes_from("T 401000 0 - 402000 402010\n");
  auto facts = testing::facts_from("M 402000 0 a0 8 int32 r\nM 402010 0 a0 8 float32 r\n");
  auto p = derive_object_profile(classes.classes()[0], facts);
  CHECK(p.layout.at(8) == CoarseType::unknown);
  CHECK(p.diagnostics.size() == 1);
}

TEST_CASE("pure asymmetry orients toward the concrete table") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {5}, 8));
  m.emplace(class_at(2), synthetic(2, {5}, 8, {{2}}));
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::a_derives_b);
  CHECK(orient(class_at(2), class_at(1), m) == Orientation::b_derives_a);
}

TEST_CASE("all neutral: unoriented") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {3}, 24));
  m.emplace(class_at(2), synthetic(2, {3}, 24));
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::unoriented);
}

TEST_CASE("smaller table, larger object: contradiction") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {2}, 32));
  m.emplace(class_at(2), synthetic(2, {3}, 16));
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::contradiction);
  CHECK(orient(class_at(2), class_at(1), m) == Orientation::contradiction);
}

TEST_CASE("object size abstains without complete coverage") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {3}, 32));
  m.emplace(class_at(2), synthetic(2, {3}, 16));
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::a_derives_b);
  m.at(class_at(2)).coverage_complete = false;
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::unoriented);
}

TEST_CASE("layout veto") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {4}, 16));
  m.emplace(class_at(2), synthetic(2, {3}, 16));
  m.at(class_at(1)).layout = {{8, CoarseType::float64}};
  m.at(class_at(2)).layout = {{8, CoarseType::int64}};
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::contradiction);
  CHECK(veto_reason(class_at(1), 0, class_at(2), m) == "layout");
  m.at(class_at(2)).layout = {{8, CoarseType::unknown}};
  CHECK(orient(class_at(1), class_at(2), m) == Orientation::a_derives_b);
  CHECK(veto_reason(class_at(1), 0, class_at(2), m).empty());
}

TEST_CASE("orient is antisymmetric on random synthetic profiles") {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 500; ++i) {
    ProfileMap m;
    for (Address id : {Address{1}, Address{2}}) {
      std::size_t n = 1 + rng() % 4;
      std::set<std::size_t> pure;
      if (rng() % 3 == 0) pure.insert(rng() % n);
      m.emplace(class_at(id), synthetic(id, {n}, 8 * static_cast<std::int64_t>(1 + rng() % 4), {pure}));
    }
    auto ab = orient(class_at(1), class_at(2), m);
    auto ba = orient(class_at(2), class_at(1), m);
    if (ab == Orientation::a_derives_b) CHECK(ba == Orientation::b_derives_a);
    if (ab == Orientation::b_derives_a) CHECK(ba == Orientation::a_derives_b);
    if (ab == Orientation::unoriented || ab == Orientation::contradiction) CHECK(ba == ab);
  }
}

TEST_CASE("unknown class") {
  ProfileMap m;
  m.emplace(class_at(1), synthetic(1, {1}, 8));
  CHECK_THROWS_AS(orient(class_at(1), class_at(9), m), Error);
  CHECK_THROWS_AS(check_secondary_offset(class_at(9), 16, class_at(1), m), Error);
}

TEST_CASE("secondary offsets of the running example") {
  auto corpus = running_example();
  auto profiles = derive_profiles(corpus.class_table(), corpus.facts);
  CHECK(check_secondary_offset(class_at(0x401228), 16, class_at(0x4011e8), profiles));
  CHECK_FALSE(check_secondary_offset(class_at(0x401228), 8, class_at(0x4011e8), profiles));
}

TEST_CASE("generator displacements") {
  GeneratorConfig cfg;
  cfg.classes = 20;
  cfg.multi_rate = 0.6;
  std::size_t checked = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto profiles = derive_profiles(corpus.class_table(), corpus.facts);
    for (const auto& c : corpus.classes) {
      if (!c.primary_vtable) continue;
      for (auto [b, disp] : c.secondary_bases) {
        if (!corpus.classes[b].primary_vtable) continue;
        ClassId d = class_at(*c.primary_vtable), base = class_at(*corpus.classes[b].primary_vtable);
        CHECK(check_secondary_offset(d, disp, base, profiles));
        CHECK_FALSE(check_secondary_offset(d, disp + 8, base, profiles));
        ++checked;
      }
    }
  }
  CHECK(checked > 20);
}

TEST_CASE("generator layouts are recovered with their declared types") {
  GeneratorConfig cfg;
  cfg.classes = 20;
  std::size_t own_hits = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto profiles = derive_profiles(corpus.class_table(), corpus.facts);
    for (int k = 0; k < static_cast<int>(corpus.classes.size()); ++k) {
      const auto& c = corpus.classes[k];
      if (!c.primary_vtable) continue;
      std::map<std::int64_t, CoarseType> declared;
      flatten(corpus, k, 0, declared);
      const auto& p = profiles.at(class_at(*c.primary_vtable));
      for (auto [off, type] : p.layout) {
        REQUIRE(declared.contains(off));
        CHECK(declared.at(off) == type);
      }
      // A concrete class's new virtuals touch its last own member.
      if (!c.abstract && !c.members.empty()) {
        auto [off, type] = c.members.back();
        CHECK(p.layout.contains(off));
        own_hits += p.layout.contains(off) && p.layout.at(off) == type;
      }
      CHECK(p.min_object_size <= c.size);
    }
  }
  CHECK(own_hits > 100);
}

TEST_CASE("object size is monotone along true edges") {
  GeneratorConfig cfg;
  cfg.classes = 20;
  cfg.multi_rate = 0.4;
  cfg.abstract_rate = 0.3;
  std::size_t violations = 0, pure_violations = 0, checked = 0;
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto profiles = derive_profiles(corpus.class_table(), corpus.facts);
    for (const auto& e : corpus.edges) {
      const auto& d = corpus.classes[e.derived];
      const auto& b = corpus.classes[e.base];
      if (!d.primary_vtable || !b.primary_vtable) continue;
      const auto& pd = profiles.at(class_at(*d.primary_vtable));
      const auto& pb = profiles.at(class_at(*b.primary_vtable));
      if (pd.coverage_complete && pb.coverage_complete) {
        ++checked;
        violations += pd.min_object_size < pb.min_object_size;
      }
      OrientQuery q{class_at(*d.primary_vtable), class_at(*b.primary_vtable), table_at(pd, e.offset), 0};
      pure_violations += orient(q, profiles) == Orientation::b_derives_a;
    }
  }
  CHECK(checked > 100);
  CHECK(violations == 0);
  CHECK(pure_violations == 0);
}

TEST_CASE("profile line") {
  auto classes = testing::classes_from("T 401000 0 - 402000 p\n");
  auto facts = testing::facts_from("M 402000 0 a0 8 int32 r\n");
  auto p = derive_object_profile(classes.classes()[0], facts);
  CHECK(format_profile(p) == "class 0x401000 size>=12 tables=2 pure=1 layout=8:int32");
}
