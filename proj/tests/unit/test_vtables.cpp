#include <doctest.h>

#include <algorithm>
#include <random>

#include "declassify/generator.hpp"
#include "declassify/vtables.hpp"
#include "support.hpp"

using namespace declassify;

namespace {

// .text at 0x401000, .rodata at 0x401200 as in the running example's layout.
testing::ImageBuilder running_image() {
  testing::ImageBuilder b;
  b.section(".text", 0x401000, 0x200, true);
  b.section(".rodata", 0x401200, 0x100, false);
  b.section(".data", 0x404000, 0x100, false, true);
  return b;
}

}  // namespace

TEST_CASE("primary table with two virtual function pointers") {
  auto b = running_image();
  b.put64(0x401208 - 16, 0);
  b.put64(0x401208 - 8, 0);
  b.put64(0x401208, 0x401100);
  b.put64(0x401210, 0x401120);
  auto r = validate_vtable(0x401208, b.image, {});
  REQUIRE(std::holds_alternative<VTable>(r));
  const auto& t = std::get<VTable>(r);
  CHECK(t.offset_to_top == 0);
  CHECK_FALSE(t.rtti.has_value());
  CHECK(t.function_count() == 2);
  CHECK(t.is_primary());
}

TEST_CASE("header checks") {
  auto b = running_image();
  b.put64(0x401210, 0x401100);
  SUBCASE("positive offset-to-top") {
    b.put64(0x401200, 8);
    CHECK(std::get<Rejection>(validate_vtable(0x401210, b.image, {})) == Rejection::BadOffsetToTop);
  }
  SUBCASE("offset-to-top beyond any object") {
    b.put64(0x401200, static_cast<std::uint64_t>(-(kMaxObjectSpan + 8)));
    CHECK(std::get<Rejection>(validate_vtable(0x401210, b.image, {})) == Rejection::BadOffsetToTop);
  }
  SUBCASE("rtti slot into writable data") {
    b.put64(0x401208, 0x404010);
    CHECK(std::get<Rejection>(validate_vtable(0x401210, b.image, {})) == Rejection::BadRttiSlot);
  }
  SUBCASE("no function entries") {
    b.put64(0x401210, 0x404010);
    CHECK(std::get<Rejection>(validate_vtable(0x401210, b.image, {})) == Rejection::NoFunctionEntries);
  }
}

TEST_CASE("back-to-back tables: the later header ends the earlier run") {
  auto b = running_image();
  // primary at 0x401210 (2 fns), secondary header at 0x401220, table at 0x401230
  b.put64(0x401210, 0x401100);
  b.put64(0x401218, 0x401110);
  b.put64(0x401220, static_cast<std::uint64_t>(-16));
  b.put64(0x401228, 0);
  b.put64(0x401230, 0x401130);
  std::vector<ImmediateHit> hits{{0x401000, 0x401210, ".rodata", 4}, {0x401008, 0x401230, ".rodata", 4}};
  auto tables = extract_vtables(b.image, hits);
  REQUIRE(tables.size() == 2);
  CHECK(tables[0].function_count() == 2);
  CHECK(tables[1].offset_to_top == -16);
  CHECK(tables[1].function_count() == 1);
}

TEST_CASE("a compiled jump table is not a VTable") {
  auto image = load_elf(testing::fixture("bin/running_example_O0"));
  // .rodata opens with the switch's table of code addresses.
  auto r = validate_vtable(0x402018, image, {});
  REQUIRE(std::holds_alternative<Rejection>(r));
  CHECK(std::get<Rejection>(r) == Rejection::BadOffsetToTop);
  auto tables = extract_vtables(image, scan_immediates(image.sections));
  for (const auto& t : tables) CHECK(t.address > 0x402040);
  CHECK(group_vtables(tables).classes.size() == 4);
}

TEST_CASE("grouping") {
  auto t = [](Address a, std::int64_t ott) { return VTable{a, ott, std::nullopt, {{EntryKind::function, 0x401000}}}; };
  SUBCASE("primary, its secondary, next primary") {
    auto g = group_vtables({t(0x401260, 0), t(0x401230, -16), t(0x401208, 0)});
    REQUIRE(g.classes.size() == 2);
    CHECK(to_address(g.classes[0].id) == 0x401208);
    CHECK(g.classes[0].group_size() == 2);
    CHECK(g.classes[0].secondaries[0].address == 0x401230);
    CHECK(to_address(g.classes[1].id) == 0x401260);
    CHECK(g.classes[1].group_size() == 1);
    CHECK(g.orphans.empty());
  }
  SUBCASE("single primary") {
    auto g = group_vtables({t(0x401208, 0)});
    REQUIRE(g.classes.size() == 1);
    CHECK(g.classes[0].group_size() == 1);
  }
  SUBCASE("leading secondary is reported as an orphan") {
    auto g = group_vtables({t(0x401200, -8), t(0x401208, 0)});
    CHECK(g.orphans.size() == 1);
    CHECK(g.classes.size() == 1);
  }
}

TEST_CASE("grouping inverts 100 random interleaved groups") {
  std::mt19937_64 rng(11);
  for (int round = 0; round < 100; ++round) {
    std::vector<std::vector<VTable>> groups;
    std::vector<VTable> flat;
    Address at = 0x402010;
    int n = 1 + static_cast<int>(rng() % 8);
    for (int g = 0; g < n; ++g) {
      std::vector<VTable> grp;
      int secs = static_cast<int>(rng() % 4);
      for (int k = 0; k <= secs; ++k) {
        VTable v{at, k == 0 ? 0 : -8 * static_cast<std::int64_t>(1 + rng() % 10), std::nullopt,
                 {{EntryKind::function, 0x401000}}};
        at += 32;
        grp.push_back(v);
        flat.push_back(v);
      }
      groups.push_back(grp);
    }
    std::shuffle(flat.begin(), flat.end(), rng);
    auto result = group_vtables(flat);
    REQUIRE(result.classes.size() == groups.size());
    std::size_t total = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      CHECK(result.classes[g].primary == groups[g][0]);
      REQUIRE(result.classes[g].secondaries.size() + 1 == groups[g].size());
      for (std::size_t k = 1; k < groups[g].size(); ++k) CHECK(result.classes[g].secondaries[k - 1] == groups[g][k]);
      total += result.classes[g].group_size();
    }
    CHECK(total == flat.size());
    std::vector<VTable> again;
    for (const auto& c : result.classes) {
      again.push_back(c.primary);
      again.insert(again.end(), c.secondaries.begin(), c.secondaries.end());
    }
    CHECK(group_vtables(again).classes.size() == result.classes.size());
  }
}

TEST_CASE("pure virtual profile") {
  VTable t{0x401208, 0, std::nullopt,
           {{EntryKind::function, 1}, {EntryKind::pure, 0}, {EntryKind::function, 2}, {EntryKind::pure, 0}}};
  CHECK(pure_virtual_profile(t) == std::set<std::size_t>{1, 3});
  VTable concrete{0x401208, 0, std::nullopt, {{EntryKind::function, 1}}};
  CHECK(pure_virtual_profile(concrete).empty());
}

TEST_CASE("abstract base in the compiled fixture has a pure profile") {
  auto image = load_elf(testing::fixture("bin/shapes_O0"));
  auto tables = extract_vtables(image, scan_immediates(image.sections));
  auto handler = detect_pure_handler(image, tables);
  REQUIRE(handler.has_value());
  CHECK(*handler == *image.dynamic_symbol_value("__cxa_pure_virtual"));
  mark_pure_entries(tables, *handler);
  auto with_pure = std::count_if(tables.begin(), tables.end(),
                                 [](const VTable& t) { return !pure_virtual_profile(t).empty(); });
  CHECK(with_pure == 1);
  CHECK(detect_pure_handler(image, tables, Address{0x1234}) == Address{0x1234});
}

TEST_CASE("budget is group size") {
  auto classes = testing::classes_from(
      "T 401208 0 - 401100 401110\nT 401228 0 - 401120 401130\nT 401248 -16 - 401140\nT 401268 0 - 401150\n");
  CHECK(classes.budget(class_at(0x401228)) == 2);
  CHECK(classes.budget(class_at(0x401268)) == 1);
  CHECK_THROWS_AS(classes.budget(class_at(0x999)), Error);

  GeneratorConfig cfg;
  cfg.classes = 20;
  cfg.multi_rate = 1.0;
  cfg.root_rate = 0.0;
  for (std::uint64_t seed = 1; seed < 40; ++seed) {
    cfg.seed = seed;
    auto corpus = generate_corpus(cfg);
    auto table = corpus.class_table();
    for (const auto& c : corpus.classes) {
      // A class with three polymorphic secondary bases that are roots owns four tables.
      if (c.secondary_bases.size() != 3 || c.vtable_elided) continue;
      std::size_t expect = corpus.classes[*c.primary_base].group_size;
      for (auto [s, d] : c.secondary_bases) expect += corpus.classes[s].group_size;
      CHECK(table.budget(class_at(*c.primary_vtable)) == expect);
      CHECK(expect >= 4);
    }
  }
}

TEST_CASE("table file round trip") {
  std::string text = "T 401208 0 - 401100 0 p\nT 401230 -16 4020a0 401140\n";
  auto tables = testing::tables_from(text);
  REQUIRE(tables.size() == 2);
  CHECK(tables[0].vfptrs[1].kind == EntryKind::null);
  CHECK(tables[0].vfptrs[2].kind == EntryKind::pure);
  CHECK(tables[1].rtti == Address{0x4020a0});
  std::ostringstream out;
  write_vtable_file(out, tables);
  CHECK(testing::tables_from(out.str()) == tables);
}
