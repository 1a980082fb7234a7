#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>
#include <sstream>

#include "declassify/ctor_dtor.hpp"
#include "declassify/generator.hpp"
#include "support.hpp"

using namespace declassify;

namespace {

const char* kRunningTables =
    "T 4011d0 0 - 401100\n"
    "T 4011e8 0 - 401110\n"
    "T 401208 0 - 401120 401130\n"
    "T 401228 0 - 401140 401150\n"
    "T 401248 -16 - 401160\n";

using Pair = std::tuple<Address, Address, std::int64_t>;

std::set<Pair> pairs_of(const std::vector<InheritanceCandidate>& cands) {
  std::set<Pair> out;
  for (const auto& c : cands) out.insert({to_address(c.derived), to_address(c.base), c.secondary_offset.value_or(0)});
  return out;
}

// Direct edges of a generated corpus, in vtable space.
std::set<Pair> edges_of(const Corpus& c, bool (*keep)(const GeneratedEdge&)) {
  std::set<Pair> out;
  for (const auto& e : c.edges) {
    if (!keep(e)) continue;
    out.insert({*c.classes[e.derived].primary_vtable, *c.classes[e.base].primary_vtable, e.offset});
  }
  return out;
}

}  // namespace

TEST_CASE("classification of the running example ctor") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from(
      "V 401500 0 a0 0 401208\nV 401500 1 a0 16 4011e8\nV 401500 2 a0 0 401228\n"
      "V 401500 3 a0 16 401248\nV 401500 4 a0 24 4011d0\n");
  auto cl = classify_functions(facts, classes);
  const auto& f = cl.at(0x401500);
  CHECK(f.kind == FunctionKind::ctor);
  CHECK(f.owner == class_at(0x401228));
  CHECK(f.coi_seq == 2u);
  CHECK(f.own_vptr_writes.size() == 5);
}

TEST_CASE("dtor tests: vtable membership and delete") {
  auto classes = testing::classes_from(kRunningTables);
  // 401140 sits in D's table; a dtor is owned by its first primary write.
  auto facts = testing::facts_from(
      "V 401140 0 a0 0 401228\nV 401140 1 a0 0 401208\n"
      "V 401700 0 a0 0 4011d0\nD 401700 1\n"
      "V 401800 0 a0 0 4011d0\n");
  auto cl = classify_functions(facts, classes);
  CHECK(cl.at(0x401140).kind == FunctionKind::dtor);
  CHECK(cl.at(0x401140).owner == class_at(0x401228));
  CHECK(cl.at(0x401140).coi_seq == 0u);
  CHECK(cl.at(0x401700).kind == FunctionKind::dtor);
  CHECK(cl.at(0x401800).kind == FunctionKind::ctor);
}

TEST_CASE("fresh allocation writes make an inlined host") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from("C 401900 0 401080 u 0\nV 401900 1 h0 0 401228\n");
  auto cl = classify_functions(facts, classes);
  CHECK(cl.at(0x401900).kind == FunctionKind::inlined_host);
  CHECK_FALSE(cl.at(0x401900).owner.has_value());
}

TEST_CASE("non-zero origin writes only: inlined host") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from("V 401900 0 a0 8 401208\n");
  CHECK(classify_functions(facts, classes).at(0x401900).kind == FunctionKind::inlined_host);
}

TEST_CASE("a call to a known ctor before the own write is a pattern violation") {
  auto classes = testing::classes_from(kRunningTables);
  // 401600 is C's ctor; 401650 calls it and then writes B: the shape of a dtor
  // that calls a base dtor first, but nothing else marks it as a dtor.
  auto facts = testing::facts_from(
      "V 401600 0 a0 0 401208\n"
      "C 401650 0 401600 a0 0\nV 401650 1 a0 0 4011e8\n");
  auto cl = classify_functions(facts, classes);
  CHECK(cl.at(0x401650).pattern_violation);
  CHECK(cl.at(0x401650).kind == FunctionKind::ctor);
}

TEST_CASE("ctor analysis of the running example") {
  auto corpus = running_example();
  ClassTable classes = corpus.class_table();
  auto cl = classify_functions(corpus.facts, classes);
  auto cands = ctor_analysis(corpus.facts, cl, classes);
  CHECK(pairs_of(cands) == std::set<Pair>{{0x401228, 0x401208, 0}, {0x401228, 0x4011e8, 16}});
  for (const auto& c : cands) {
    CHECK(c.source == CandidateSource::ctor_inline);
    CHECK(c.function == 0x401500);
    CHECK(c.derived != c.base);
  }
}

TEST_CASE("a root class ctor yields nothing") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from("V 401600 0 a0 0 401208\nM 401600 1 a0 8 int32 w\n");
  auto cl = classify_functions(facts, classes);
  CHECK(ctor_analysis(facts, cl, classes).empty());
  CHECK(dtor_analysis(facts, cl, classes).empty());
}

TEST_CASE("dtor budget drops the composed member") {
  auto classes = testing::classes_from(kRunningTables);
  // dtors of A, B, C, then D's: own writes, A's dtor on +24, B's on +16, C's on +0.
  auto facts = testing::facts_from(
      "V 401100 0 a0 0 4011d0\n"
      "V 401110 0 a0 0 4011e8\n"
      "V 401120 0 a0 0 401208\n"
      "V 401140 0 a0 0 401228\nV 401140 1 a0 16 401248\n"
      "C 401140 2 401100 a0 24\nC 401140 3 401110 a0 16\nC 401140 4 401120 a0 0\n");
  auto cl = classify_functions(facts, classes);
  REQUIRE(cl.at(0x401140).kind == FunctionKind::dtor);
  auto cands = dtor_analysis(facts, cl, classes);
  CHECK(pairs_of(cands) == std::set<Pair>{{0x401228, 0x401208, 0}, {0x401228, 0x4011e8, 16}});
  for (const auto& c : cands) CHECK(c.source == CandidateSource::dtor_call);
}

TEST_CASE("dtor with no trailing calls yields nothing") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from("V 401140 0 a0 0 401228\nV 401140 1 a0 16 401248\nM 401140 2 a0 8 int32 r\n");
  auto cl = classify_functions(facts, classes);
  CHECK(dtor_analysis(facts, cl, classes).empty());
}

TEST_CASE("literal dtor reading only looks at or before the COI") {
  auto classes = testing::classes_from(kRunningTables);
  auto facts = testing::facts_from(
      "V 401120 0 a0 0 401208\n"
      "V 401140 0 a0 0 401228\nC 401140 1 401120 a0 0\n");
  auto cl = classify_functions(facts, classes);
  CHECK(dtor_analysis(facts, cl, classes).size() == 1);
  CHECK(dtor_analysis(facts, cl, classes, AnalysisOptions{.alg2_literal = true}).empty());
}

TEST_CASE("single inheritance with composition, randomized") {
  // Hand-built chains: class k derives from k-1 and may hold a composed object
  // of an unrelated root. The ctor calls the base, writes its vptr, then
  // constructs the member. Only the base may become a candidate.
  std::mt19937_64 rng(42);
  for (int round = 0; round < 200; ++round) {
    int depth = 2 + static_cast<int>(rng() % 5);
    std::ostringstream vt, facts;
    Address root = 0x600000;  // unrelated composed class
    vt << "T " << hex(root) << " 0 - " << hex(0x500000) << '\n';
    facts << "V 510000 0 a0 0 " << hex(root) << '\n';
    std::set<Pair> expect;
    for (int k = 0; k < depth; ++k) {
      Address table = 0x700000 + 0x100 * k;
      Address ctor = 0x520000 + 0x100 * k;
      vt << "T " << hex(table) << " 0 - " << hex(0x530000 + k) << '\n';
      std::uint64_t seq = 0;
      if (k > 0) {
        facts << "C " << hex(ctor) << ' ' << seq++ << ' ' << hex(0x520000 + 0x100 * (k - 1)) << " a0 0\n";
        expect.insert({table, 0x700000 + 0x100 * (k - 1), 0});
      }
      facts << "V " << hex(ctor) << ' ' << seq++ << " a0 0 " << hex(table) << '\n';
      if (rng() % 2) facts << "C " << hex(ctor) << ' ' << seq++ << " 510000 a0 " << 8 * (k + 2) << '\n';
    }
    auto classes = testing::classes_from(vt.str());
    auto table = testing::facts_from(facts.str());
    auto cl = classify_functions(table, classes);
    CHECK(pairs_of(ctor_analysis(table, cl, classes)) == expect);
  }
}

TEST_CASE("generator forest without inlining: ctor candidates are the direct edges") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    GeneratorConfig cfg;
    cfg.classes = 15;
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto classes = corpus.class_table();
    auto cl = classify_functions(corpus.facts, classes);
    auto cands = ctor_analysis(corpus.facts, cl, classes);
    CHECK(pairs_of(cands) == edges_of(corpus, [](const GeneratedEdge&) { return true; }));
    for (const auto& c : cands) CHECK(c.source == CandidateSource::ctor_call);
    auto dcands = dtor_analysis(corpus.facts, cl, classes);
    CHECK(pairs_of(dcands) == edges_of(corpus, [](const GeneratedEdge& e) { return e.dtor; }));
  }
}

TEST_CASE("no function is both ctor and dtor, and coi is an own write") {
  GeneratorConfig cfg;
  cfg.classes = 20;
  cfg.inline_rate = 0.5;
  cfg.ctor_elision = 0.2;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto classes = corpus.class_table();
    std::set<Address> ctors, dtors;
    for (const auto& c : corpus.classes) {
      if (c.vtable_elided) continue;
      if (c.ctor_emitted && c.ctor) ctors.insert(c.ctor);
      if (!c.dtor_empty && c.complete_dtor) dtors.insert(c.complete_dtor);
    }
    for (const auto& [addr, f] : classify_functions(corpus.facts, classes)) {
      if (ctors.contains(addr)) CHECK(f.kind == FunctionKind::ctor);
      if (dtors.contains(addr)) CHECK(f.kind == FunctionKind::dtor);
      if (f.kind == FunctionKind::ctor || f.kind == FunctionKind::dtor) {
        REQUIRE(f.coi_seq.has_value());
        REQUIRE(f.owner.has_value());
        auto hit = std::find_if(f.own_vptr_writes.begin(), f.own_vptr_writes.end(),
                                [&](const OwnVptrWrite& w) { return w.seq == *f.coi_seq; });
        REQUIRE(hit != f.own_vptr_writes.end());
        CHECK(hit->base == ThisExpr::argument(0, 0));
        CHECK(class_at(hit->vtable) == *f.owner);
      }
    }
  }
}
