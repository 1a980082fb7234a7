#include "declassify/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "declassify/binary_image.hpp"
#include "declassify/cht.hpp"
#include "declassify/ctor_dtor.hpp"
#include "declassify/evaluation.hpp"
#include "declassify/facts.hpp"
#include "declassify/generator.hpp"
#include "declassify/ingest.hpp"
#include "declassify/ola.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::UnknownFormat:
    case ErrorKind::InvalidConfig:
      return 1;
    case ErrorKind::UnknownClass:
    case ErrorKind::Invariant:
      return 3;
    default:
      return 2;
  }
}

namespace {

struct Recovered {
  std::vector<VTable> tables;
  std::optional<Address> pure_handler;
};

Recovered recover_tables(const ElfImage& image, std::optional<Address> pure_addr) {
  auto hits = scan_immediates(image.sections);
  Recovered r;
  r.tables = extract_vtables(image, hits);
  r.pure_handler = detect_pure_handler(image, r.tables, pure_addr);
  if (r.pure_handler) mark_pure_entries(r.tables, *r.pure_handler);
  return r;
}

std::set<Address> vfptr_targets(const std::vector<VTable>& tables) {
  std::set<Address> out;
  for (const auto& t : tables)
    for (const auto& e : t.vfptrs)
      if (e.kind == EntryKind::function) out.insert(e.target);
  return out;
}

std::optional<Address> parse_address_option(const std::string& text) {
  if (text.empty()) return std::nullopt;
  auto a = parse_hex(text);
  if (!a) throw Error(ErrorKind::Usage, "bad address: " + text);
  return a;
}

/// What every analysis subcommand starts from: classes plus facts, read
/// from files or recovered from a binary.
struct Inputs {
  std::string binary;
  std::string facts;
  std::string vtables;
  std::string pure_addr;

  std::vector<VTable> tables;
  ClassTable classes;
  FactsTable table;

  void load(std::ostream& err) {
    if (!binary.empty()) {
      if (!facts.empty()) throw Error(ErrorKind::Usage, "give a binary or --facts, not both");
      auto image = load_elf(binary);
      tables = recover_tables(image, parse_address_option(pure_addr)).tables;
      if (!vtables.empty()) tables = load_vtable_file(vtables);
      classes = ClassTable(group_vtables(tables).classes);
      ObjdumpProvider provider(image, vfptr_targets(tables));
      table = ingest_binary(&image, classes, provider);
      return;
    }
    if (facts.empty() || vtables.empty()) throw Error(ErrorKind::Usage, "need a binary, or --facts with --vtables");
    tables = load_vtable_file(vtables);
    auto grouping = group_vtables(tables);
    for (const auto& t : grouping.orphans)
      err << "warning: secondary table " << hex0x(t.address) << " precedes every primary table\n";
    classes = ClassTable(std::move(grouping.classes));
    table = load_facts(facts);
    std::set<Address> warned;
    for (const auto& [addr, fn] : table)
      for (const auto& e : fn.events)
        if (const auto* w = e.vptr_write(); w && !classes.contains_table(w->vtable) && warned.insert(w->vtable).second)
          err << "warning: " << hex0x(w->vtable) << " written as a vptr is not a known table\n";
  }

  void bind(CLI::App* sub, bool binary_positional = true) {
    if (binary_positional) sub->add_option("binary", binary, "ELF executable")->check(CLI::ExistingFile);
    sub->add_option("--facts", facts, "facts file")->check(CLI::ExistingFile);
    sub->add_option("--vtables", vtables, "table file")->check(CLI::ExistingFile);
    sub->add_option("--pure-virtual-addr", pure_addr, "pure-virtual handler address (hex)");
  }
};

void write_output(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Usage, "cannot write " + path);
  f << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::ParseError, "cannot read " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

AnalysisMode parse_mode(const std::string& m) {
  if (m == "full") return AnalysisMode::full;
  if (m == "ctor-dtor") return AnalysisMode::ctor_dtor;
  if (m == "ctor") return AnalysisMode::ctor_only;
  throw Error(ErrorKind::Usage, "unknown mode: " + m);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recover class hierarchies from C++ binaries", "declassify"};
  app.require_subcommand(1, 1);
  std::function<void()> action;

  // sections
  std::string sec_bin;
  auto* sections = app.add_subcommand("sections", "dump allocatable sections");
  sections->add_option("binary", sec_bin)->required()->check(CLI::ExistingFile);
  sections->callback([&] {
    action = [&] {
      auto image = load_elf(sec_bin);
      for (const auto& s : image.sections)
        out << s.name << '\t' << hex(s.virtual_address) << '\t' << hex(s.size) << '\t' << s.flags() << '\n';
    };
  });

  // vtables
  std::string vt_bin, vt_out, vt_pure;
  auto* vtables = app.add_subcommand("vtables", "extract and group VTables");
  vtables->add_option("binary", vt_bin)->required()->check(CLI::ExistingFile);
  vtables->add_option("-o,--output", vt_out, "also write the table file here");
  vtables->add_option("--pure-virtual-addr", vt_pure, "pure-virtual handler address (hex)");
  vtables->callback([&] {
    action = [&] {
      auto image = load_elf(vt_bin);
      auto r = recover_tables(image, parse_address_option(vt_pure));
      if (r.pure_handler) err << "pure-virtual handler " << hex0x(*r.pure_handler) << '\n';
      auto grouping = group_vtables(r.tables);
      for (const auto& t : grouping.orphans) err << "warning: orphan secondary table " << hex0x(t.address) << '\n';
      for (const auto& c : grouping.classes) {
        std::size_t fns = 0;
        for (std::size_t i = 0; i < c.group_size(); ++i) fns += c.table(i).function_count();
        out << "class " << hex0x(to_address(c.id)) << " tables=" << c.group_size() << " fns=" << fns << " pure=";
        auto pure = pure_virtual_profile(c.primary);
        if (pure.empty()) out << '-';
        bool first = true;
        for (auto p : pure) {
          out << (first ? "" : ",") << p;
          first = false;
        }
        out << '\n';
      }
      if (!vt_out.empty()) {
        std::ostringstream s;
        write_vtable_file(s, r.tables);
        write_output(vt_out, s.str(), out);
      }
    };
  });

  // ingest
  std::string in_bin, in_out, in_vt_out, in_pure;
  auto* ingest = app.add_subcommand("ingest", "lift a binary to facts");
  ingest->add_option("binary", in_bin)->required()->check(CLI::ExistingFile);
  ingest->add_option("-o,--output", in_out, "facts file (default stdout)");
  ingest->add_option("--vtables-out", in_vt_out, "write the recovered table file");
  ingest->add_option("--pure-virtual-addr", in_pure, "pure-virtual handler address (hex)");
  ingest->callback([&] {
    action = [&] {
      auto image = load_elf(in_bin);
      auto r = recover_tables(image, parse_address_option(in_pure));
      ClassTable classes(group_vtables(r.tables).classes);
      ObjdumpProvider provider(image, vfptr_targets(r.tables));
      write_output(in_out, serialize_facts(ingest_binary(&image, classes, provider)), out);
      if (!in_vt_out.empty()) {
        std::ostringstream s;
        write_vtable_file(s, r.tables);
        write_output(in_vt_out, s.str(), out);
      }
    };
  });

  // classify
  Inputs cl_in;
  auto* classify = app.add_subcommand("classify", "label ctors and dtors");
  cl_in.bind(classify);
  classify->callback([&] {
    action = [&] {
      cl_in.load(err);
      for (const auto& [addr, cf] : classify_functions(cl_in.table, cl_in.classes)) {
        out << hex0x(addr) << ' ' << to_string(cf.kind)
            << " owner=" << (cf.owner ? hex0x(to_address(*cf.owner)) : "-")
            << " coi=" << (cf.coi_seq ? std::to_string(*cf.coi_seq) : "-") << '\n';
        if (cf.pattern_violation) err << hex0x(addr) << ": " << cf.diagnostic << '\n';
      }
    };
  });

  // ola
  Inputs ola_in;
  auto* ola = app.add_subcommand("ola", "per-class object layout profiles");
  ola_in.bind(ola);
  ola->callback([&] {
    action = [&] {
      ola_in.load(err);
      for (const auto& [id, p] : derive_profiles(ola_in.classes, ola_in.table)) out << format_profile(p) << '\n';
    };
  });

  // analyze
  Inputs an_in;
  std::string an_format = "dot", an_out, an_mode = "full";
  bool an_alg2 = false, an_cfg = false;
  auto* analyze_cmd = app.add_subcommand("analyze", "recover the class hierarchy");
  an_in.bind(analyze_cmd);
  analyze_cmd->add_option("--format", an_format, "dot or json");
  analyze_cmd->add_option("-o,--output", an_out, "output file (default stdout)");
  analyze_cmd->add_option("--mode", an_mode, "full, ctor-dtor or ctor");
  analyze_cmd->add_flag("--alg2-literal", an_alg2, "dtor calls at or before the COI write only");
  analyze_cmd->add_flag("--cfg-order", an_cfg, "CFG-ordered traversal (not supported)");
  analyze_cmd->callback([&] {
    action = [&] {
      if (an_cfg) throw Error(ErrorKind::Usage, "--cfg-order is not supported; facts are produced by linear sweep");
      auto format = parse_graph_format(an_format);
      auto mode = parse_mode(an_mode);
      an_in.load(err);
      PipelineOptions opts;
      opts.mode = mode;
      opts.analysis.alg2_literal = an_alg2;
      auto graph = analyze(an_in.table, an_in.classes, opts);
      for (const auto& line : graph.log) err << line << '\n';
      write_output(an_out, emit(graph, format), out);
    };
  });

  // eval
  std::string ev_cht, ev_gt, ev_rtti;
  bool ev_restrict = false, ev_falses = false;
  auto* eval = app.add_subcommand("eval", "score a recovered hierarchy");
  eval->add_option("--cht", ev_cht, "analyze --format json output")->required()->check(CLI::ExistingFile);
  eval->add_option("--gt", ev_gt, "ground-truth JSON")->check(CLI::ExistingFile);
  eval->add_option("--gt-from-rtti", ev_rtti, "derive ground truth from a binary's RTTI")->check(CLI::ExistingFile);
  eval->add_flag("--restrict-to-found", ev_restrict, "score only classes whose VTable was recovered");
  eval->add_flag("--falses", ev_falses, "list false and missed edges");
  eval->callback([&] {
    action = [&] {
      if (ev_gt.empty() == ev_rtti.empty()) throw Error(ErrorKind::Usage, "give exactly one of --gt, --gt-from-rtti");
      auto graph = parse_cht_json(read_text(ev_cht));
      GroundTruth gt;
      if (!ev_gt.empty()) {
        gt = load_ground_truth(ev_gt);
      } else {
        auto image = load_elf(ev_rtti);
        ClassTable classes(group_vtables(recover_tables(image, std::nullopt).tables).classes);
        gt = parse_rtti(image, classes);
      }
      out << format_report(score(graph, gt, ev_restrict));
      if (ev_falses) out << format_falses(falses_report(graph, gt, ev_restrict));
    };
  });

  // gen
  GeneratorConfig gen_cfg;
  std::string gen_out = "corpus", gen_preset;
  auto* gen = app.add_subcommand("gen", "write a synthetic facts corpus");
  gen->add_option("--classes", gen_cfg.classes, "class count");
  gen->add_option("--seed", gen_cfg.seed, "RNG seed");
  gen->add_option("--root-rate", gen_cfg.root_rate);
  gen->add_option("--multi-rate", gen_cfg.multi_rate);
  gen->add_option("--composition-rate", gen_cfg.composition_rate);
  gen->add_option("--abstract-rate", gen_cfg.abstract_rate);
  gen->add_option("--inline-rate", gen_cfg.inline_rate);
  gen->add_option("--ctor-elision", gen_cfg.ctor_elision);
  gen->add_option("--dtor-elision", gen_cfg.dtor_elision);
  gen->add_option("--vtable-elision", gen_cfg.vtable_elision);
  gen->add_option("--preset", gen_preset, "running-example");
  gen->add_option("-o,--output", gen_out, "output prefix: <p>.facts <p>.vt <p>.gt.json");
  gen->callback([&] {
    action = [&] {
      Corpus corpus;
      if (gen_preset.empty()) corpus = generate_corpus(gen_cfg);
      else if (gen_preset == "running-example") corpus = running_example();
      else throw Error(ErrorKind::Usage, "unknown preset: " + gen_preset);
      write_corpus(corpus, gen_out);
      err << "classes=" << corpus.classes.size() << " edges=" << corpus.edges.size()
          << " ctors=" << corpus.ctor_count << " dtors=" << corpus.dtor_count << '\n';
    };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  try {
    action();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}

}  // namespace declassify
