// One PASS/FAIL line per acceptance criterion; nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "declassify/cht.hpp"
#include "declassify/cli.hpp"
#include "declassify/evaluation.hpp"
#include "declassify/generator.hpp"

using namespace declassify;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

const fs::path kFixtures = DECLASSIFY_FIXTURES;

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [" << what << "]";
    }
  }
};

struct Run {
  int code = 0;
  std::string out, err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("declassify_acceptance_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

ClassTable classes_of(const fs::path& vt) { return ClassTable(group_vtables(load_vtable_file(vt)).classes); }

ChtGraph analyze_fixture(const std::string& stem) {
  return analyze(load_facts(kFixtures / "facts" / (stem + ".facts")), classes_of(kFixtures / "facts" / (stem + ".vt")));
}

std::string fmt(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(4) << v;
  return s.str();
}

// 1 ------------------------------------------------------------------------
Verdict running_example_golden() {
  Verdict v;
  auto t0 = Clock::now();
  auto r = cli({"analyze", "--facts", (kFixtures / "facts/running_example.facts").string(), "--vtables",
                (kFixtures / "facts/running_example.vt").string(), "--format", "json"});
  double secs = seconds_since(t0);
  v.require(r.code == 0, "exit " + std::to_string(r.code));
  auto g = parse_cht_json(r.out);
  const ClassId A = class_at(0x4011d0), B = class_at(0x4011e8), C = class_at(0x401208), D = class_at(0x401228);
  v.require(g.edges.size() == 2, "edge count " + std::to_string(g.edges.size()));
  const auto* dc = g.find(D, C);
  const auto* db = g.find(D, B);
  v.require(dc && dc->kind == EdgeKind::primary, "D->C primary");
  v.require(db && db->kind == EdgeKind::secondary && db->offset == 16, "D->B secondary @16");
  v.require(g.nodes.contains(A), "A present");
  for (const auto& [k, e] : g.edges) v.require(e.derived != A && e.base != A, "A isolated");
  v.require(secs < 1.0, "time");
  v.detail << " edges=" << g.edges.size() << " time=" << fmt(secs) << "s";
  return v;
}

// 2 ------------------------------------------------------------------------
Verdict two_components() {
  Verdict v;
  auto g = analyze_fixture("two_components");
  auto gt = load_ground_truth(kFixtures / "facts/two_components.gt.json");
  std::map<Address, std::string> name;
  for (const auto& [n, a] : gt.name_to_vt)
    if (a) name[*a] = n;
  std::set<std::string> left{"A", "B", "C"};
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& [k, e] : g.edges) {
    auto d = name.at(to_address(e.derived)), b = name.at(to_address(e.base));
    got.insert({d, b});
    v.require(left.contains(d) == left.contains(b), "cross edge " + d + "->" + b);
  }
  for (auto [d, b] : std::vector<std::pair<std::string, std::string>>{{"B", "A"}, {"B", "C"}, {"E", "D"}, {"E", "F"}})
    v.require(got.contains({d, b}), "missing " + d + "->" + b);
  v.detail << " edges=" << got.size();
  return v;
}

// 3 ------------------------------------------------------------------------
Verdict oracle_equivalence() {
  Verdict v;
  auto t0 = Clock::now();
  std::size_t exact = 0, within = 0;
  double worst_p = 1.0;
  int worst_gap = 0;
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    GeneratorConfig cfg;
    cfg.classes = 1 + static_cast<int>(seed % 20);
    cfg.seed = seed;
    cfg.inline_rate = cfg.ctor_elision = cfg.dtor_elision = cfg.vtable_elision = 0;
    auto corpus = generate_corpus(cfg);
    auto r = score(analyze(corpus.facts, corpus.class_table()), corpus.gt, false);
    if (r.precision == 1.0 && r.recall == 1.0) ++exact;

    cfg.inline_rate = 0.5;
    cfg.ctor_elision = 0.3;
    corpus = generate_corpus(cfg);
    r = score(analyze(corpus.facts, corpus.class_table()), corpus.gt, false);
    auto survived = std::count_if(corpus.edges.begin(), corpus.edges.end(), [](auto& e) { return e.survives(); });
    int gap = std::abs(static_cast<int>(r.tp) - static_cast<int>(survived));
    worst_gap = std::max(worst_gap, gap);
    worst_p = std::min(worst_p, r.precision);
    if (r.precision >= 0.95 && gap <= 2) ++within;
  }
  double secs = seconds_since(t0);
  v.require(exact == 500, "zero-rate exact " + std::to_string(exact) + "/500");
  v.require(within == 500, "inlined within bound " + std::to_string(within) + "/500");
  v.require(secs < 60.0, "time");
  v.detail << " exact=" << exact << "/500 bounded=" << within << "/500 min_precision=" << fmt(worst_p)
           << " max_gap=" << worst_gap << " time=" << fmt(secs) << "s";
  return v;
}

// 4 ------------------------------------------------------------------------
Verdict ctor_dtor_differential() {
  Verdict v;
  std::size_t gt_edges = 0, tp_ctor = 0, tp_both = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    GeneratorConfig cfg;
    cfg.classes = 20;
    cfg.seed = seed;
    cfg.ctor_elision = 0.8;
    cfg.dtor_elision = 0.0;
    auto corpus = generate_corpus(cfg);
    auto classes = corpus.class_table();
    gt_edges += corpus.gt.edges.size();
    tp_ctor += score(analyze(corpus.facts, classes, {.mode = AnalysisMode::ctor_only}), corpus.gt, false).tp;
    tp_both += score(analyze(corpus.facts, classes, {.mode = AnalysisMode::ctor_dtor}), corpus.gt, false).tp;
  }
  double r_ctor = gt_edges ? double(tp_ctor) / gt_edges : 1.0;
  double r_both = gt_edges ? double(tp_both) / gt_edges : 1.0;
  v.require(r_both >= 2.0 * r_ctor, "ratio");
  v.require(r_both > 0, "nonzero recall");
  v.detail << " recall_ctor=" << fmt(r_ctor) << " recall_ctor_dtor=" << fmt(r_both);
  return v;
}

// 5 ------------------------------------------------------------------------
Verdict metric_arithmetic() {
  Verdict v;
  auto r = cli({"eval", "--cht", (kFixtures / "facts/metric_19of22.cht.json").string(), "--gt",
                (kFixtures / "facts/metric_19of22.gt.json").string()});
  v.require(r.code == 0, "exit");
  auto report = score(parse_cht_json(slurp(kFixtures / "facts/metric_19of22.cht.json")),
                      load_ground_truth(kFixtures / "facts/metric_19of22.gt.json"), false);
  v.require(std::abs(report.precision * 100 - 100.0) <= 0.05, "precision");
  v.require(std::abs(report.recall * 100 - 86.4) <= 0.05, "recall");
  v.detail << " precision=" << fmt(report.precision * 100) << "% recall=" << fmt(report.recall * 100) << "%";
  return v;
}

// 6 ------------------------------------------------------------------------
Verdict mib_accounting() {
  Verdict v;
  auto r = score(analyze_fixture("mib_chain"), load_ground_truth(kFixtures / "facts/mib_chain.gt.json"), true);
  v.require(r.mib_edges == 1, "mib");
  v.require(r.fp == 0, "fp");
  v.require(r.precision == 1.0, "precision");
  v.detail << " mib=" << r.mib_edges << " tp=" << r.tp << " fp=" << r.fp << " precision=" << fmt(r.precision);
  return v;
}

// 7 ------------------------------------------------------------------------
ScoreReport score_binary(const std::string& name, const fs::path& dir, double& surviving) {
  auto bin = (kFixtures / "bin" / name).string();
  auto facts = (dir / (name + ".facts")).string(), vt = (dir / (name + ".vt")).string();
  auto cht = (dir / (name + ".json")).string();
  if (cli({"ingest", bin, "-o", facts, "--vtables-out", vt}).code != 0) throw std::runtime_error("ingest " + name);
  if (cli({"analyze", "--facts", facts, "--vtables", vt, "--format", "json", "-o", cht}).code != 0)
    throw std::runtime_error("analyze " + name);
  auto gt = load_ground_truth(kFixtures / "bin" / (name + ".gt.json"));
  auto classes = classes_of(vt);
  std::size_t alive = 0;
  auto present = [&](const std::string& c) {
    auto a = gt.name_to_vt.at(c);
    return a && classes.find(class_at(*a)) != nullptr;
  };
  for (const auto& e : gt.edges) alive += present(e.derived) && present(e.base);
  surviving = gt.edges.empty() ? 1.0 : double(alive) / gt.edges.size();
  return score(parse_cht_json(slurp(cht)), gt, false);
}

Verdict real_binary() {
  Verdict v;
  auto dir = scratch("binary");
  double s0 = 0, s2 = 0;
  auto o0 = score_binary("shapes_O0", dir, s0);
  auto o2 = score_binary("shapes_O2", dir, s2);
  v.require(o0.precision == 1.0 && o0.recall == 1.0, "O0 exact");
  v.require(o2.precision == 1.0, "O2 precision");
  v.require(o2.recall >= s2, "O2 recall");
  v.detail << " O0 P=" << fmt(o0.precision) << " R=" << fmt(o0.recall) << "; O2 P=" << fmt(o2.precision)
           << " R=" << fmt(o2.recall) << " surviving=" << fmt(s2);
  return v;
}

// 8 ------------------------------------------------------------------------
Verdict aliasing_false() {
  Verdict v;
  auto g = analyze_fixture("aliasing");
  auto falses = falses_report(g, load_ground_truth(kFixtures / "facts/aliasing.gt.json"), false);
  std::size_t actual = 0;
  for (const auto& f : falses) {
    bool overwrite = std::any_of(f.provenance.begin(), f.provenance.end(),
                                 [](const std::string& p) { return p.starts_with("overwrite@"); });
    if (f.inferred && f.category == FalseCategory::actual_false && overwrite) ++actual;
  }
  v.require(actual == 1, "actual_false count " + std::to_string(actual));
  v.require(falses.size() == 1, "other falses");
  v.detail << " actual_false=" << actual << " (--cfg-order not implemented)";
  return v;
}

// 9 ------------------------------------------------------------------------
Verdict determinism() {
  Verdict v;
  auto f = [](const char* rel) { return (kFixtures / rel).string(); };
  std::string facts = f("facts/running_example.facts"), vt = f("facts/running_example.vt");
  std::string bin = f("bin/shapes_O0");
  std::vector<std::pair<std::string, std::function<std::vector<std::string>(const fs::path&)>>> commands = {
      {"sections", [&](const fs::path&) { return std::vector<std::string>{"sections", bin}; }},
      {"vtables", [&](const fs::path& d) { return std::vector<std::string>{"vtables", bin, "-o", (d / "o").string()}; }},
      {"ingest",
       [&](const fs::path& d) {
         return std::vector<std::string>{"ingest", bin, "-o", (d / "o").string(), "--vtables-out", (d / "p").string()};
       }},
      {"classify", [&](const fs::path&) { return std::vector<std::string>{"classify", "--facts", facts, "--vtables", vt}; }},
      {"ola", [&](const fs::path&) { return std::vector<std::string>{"ola", "--facts", facts, "--vtables", vt}; }},
      {"analyze-dot",
       [&](const fs::path&) { return std::vector<std::string>{"analyze", "--facts", facts, "--vtables", vt}; }},
      {"analyze-json",
       [&](const fs::path& d) {
         return std::vector<std::string>{"analyze", "--facts", facts, "--vtables", vt, "--format", "json",
                                         "-o",      (d / "o").string()};
       }},
      {"eval",
       [&](const fs::path&) {
         return std::vector<std::string>{"eval",   "--cht", f("facts/metric_19of22.cht.json"),
                                         "--gt",   f("facts/metric_19of22.gt.json"), "--falses"};
       }},
      {"eval-rtti",
       [&](const fs::path&) {
         return std::vector<std::string>{"eval", "--cht", f("facts/metric_19of22.cht.json"), "--gt-from-rtti",
                                         f("bin/shapes_rtti")};
       }},
      {"gen",
       [&](const fs::path& d) {
         return std::vector<std::string>{"gen", "--classes", "40", "--seed", "3", "--inline-rate", "0.4",
                                         "-o",  (d / "o").string()};
       }},
  };
  std::size_t same = 0;
  for (const auto& [name, argv] : commands) {
    std::vector<Run> runs;
    std::vector<std::map<std::string, std::string>> files;
    for (int i = 0; i < 2; ++i) {
      auto d = scratch("det_" + name + std::to_string(i));
      runs.push_back(cli(argv(d)));
      std::map<std::string, std::string> snapshot;
      for (const auto& entry : fs::directory_iterator(d)) snapshot[entry.path().filename()] = slurp(entry.path());
      files.push_back(std::move(snapshot));
    }
    bool ok = runs[0].code == runs[1].code && runs[0].out == runs[1].out && files[0] == files[1];
    // A command that fails both times proves nothing.
    ok = ok && runs[0].code == 0;
    v.require(ok, name);
    same += ok;
  }
  v.detail << " identical=" << same << "/" << commands.size();
  return v;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"running-example golden", running_example_golden},
      {"six-class components", two_components},
      {"generator oracle equivalence", oracle_equivalence},
      {"ctor vs ctor+dtor recall", ctor_dtor_differential},
      {"19-of-22 metric arithmetic", metric_arithmetic},
      {"missing intermediate base accounting", mib_accounting},
      {"real binary O0/O2", real_binary},
      {"aliasing false positive", aliasing_false},
      {"subcommand determinism", determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " exception: " << e.what();
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << ": " << criteria[i].first << " --"
              << v.detail.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
