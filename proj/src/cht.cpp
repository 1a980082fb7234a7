#include "declassify/cht.hpp"

#include <algorithm>
#include <functional>
#include <json.hpp>
#include <sstream>

namespace declassify {

std::vector<OverwritePair> overwrite_analysis(const FactsTable& facts, const Classification& classified,
                                              const ClassTable& classes) {
  struct Writer {
    ClassId cls{};
    std::size_t table = 0;
    std::uint64_t seq = 0;
  };

  std::vector<OverwritePair> out;
  for (const auto& [addr, cf] : classified) {
    if (cf.kind == FunctionKind::other) continue;
    std::map<ThisExpr, Writer> last;
    for (const auto& e : facts.at(addr).events) {
      std::optional<std::pair<ThisExpr, Writer>> w;
      if (const auto* v = e.vptr_write()) {
        if (auto ref = classes.table(v->vtable); ref && v->base.is_known())
          w = {v->base, Writer{ref->owner, ref->index, e.seq}};
      } else if (const auto* c = e.call(); c && c->target && c->this_arg.is_known()) {
        auto it = classified.find(*c->target);
        if (it != classified.end() && it->first != addr && it->second.owner &&
            (it->second.kind == FunctionKind::ctor || it->second.kind == FunctionKind::dtor))
          w = {c->this_arg, Writer{*it->second.owner, 0, e.seq}};
      }
      if (!w) continue;
      auto [slot, fresh] = last.try_emplace(w->first, w->second);
      if (!fresh) {
        // Only the immediately preceding writer is related; no transitive grouping.
        if (slot->second.cls != w->second.cls)
          out.push_back(OverwritePair{addr, w->first, slot->second.cls, w->second.cls, slot->second.table,
                                      w->second.table, slot->second.seq, w->second.seq});
        slot->second = w->second;
      }
    }
  }
  return out;
}

const ChtEdge* ChtGraph::find(ClassId derived, ClassId base) const {
  auto it = edges.find({derived, base});
  return it == edges.end() ? nullptr : &it->second;
}

namespace {

int provenance_rank(const std::string& p) {
  if (p.starts_with("ctor")) return 3;
  if (p.starts_with("dtor")) return 2;
  return 1;
}

int edge_rank(const ChtEdge& e) {
  int best = 0;
  for (const auto& p : e.provenance) best = std::max(best, provenance_rank(p));
  return best;
}

std::string node_name(ClassId id) { return hex0x(to_address(id)); }

std::string edge_name(ClassId d, ClassId b) { return node_name(d) + "->" + node_name(b); }

std::size_t table_with_displacement(const ObjectProfile& p, std::int64_t disp) {
  for (std::size_t i = 0; i < p.table_displacements.size(); ++i)
    if (p.table_displacements[i] == disp) return i;
  return 0;
}

class Builder {
 public:
  Builder(const ClassTable& classes, const ProfileMap& profiles) : profiles_(profiles) {
    for (const auto& c : classes.classes()) graph_.nodes.insert(c.id);
  }

  /// Applies rule 6 and the "only if" filters; true when the edge is kept.
  bool admit(ClassId derived, ClassId base, std::optional<std::int64_t> offset, const std::string& provenance) {
    if (derived == base) return false;
    if (!graph_.nodes.contains(derived) || !graph_.nodes.contains(base)) return false;
    std::size_t table = 0;
    if (offset && *offset > 0) {
      if (!check_secondary_offset(derived, *offset, base, profiles_)) {
        graph_.log.push_back("drop " + edge_name(derived, base) + " (" + provenance +
                             "): no secondary table at +" + std::to_string(*offset));
        return false;
      }
      table = table_with_displacement(profiles_.at(derived), *offset);
    }
    if (auto why = veto_reason(derived, table, base, profiles_); !why.empty()) {
      graph_.log.push_back("veto " + edge_name(derived, base) + " (" + provenance + "): " + why);
      return false;
    }
    auto [it, fresh] = graph_.edges.try_emplace({derived, base});
    auto& e = it->second;
    if (fresh) {
      e.derived = derived;
      e.base = base;
      if (offset && *offset > 0) {
        e.kind = EdgeKind::secondary;
        e.offset = offset;
      }
    }
    e.provenance.insert(provenance);
    return true;
  }

  void break_cycles() {
    for (;;) {
      auto cycle = find_cycle();
      if (cycle.empty()) return;
      auto victim = *std::min_element(cycle.begin(), cycle.end(), [&](const auto& a, const auto& b) {
        return std::pair{edge_rank(graph_.edges.at(a)), a} < std::pair{edge_rank(graph_.edges.at(b)), b};
      });
      graph_.log.push_back("cycle: drop " + edge_name(victim.first, victim.second));
      graph_.edges.erase(victim);
    }
  }

  ChtGraph take() { return std::move(graph_); }
  ChtGraph& graph() { return graph_; }

 private:
  using Key = std::pair<ClassId, ClassId>;

  std::vector<Key> find_cycle() const {
    std::map<ClassId, std::vector<ClassId>> adj;
    for (const auto& [k, e] : graph_.edges) adj[k.first].push_back(k.second);
    std::map<ClassId, int> color;
    std::vector<ClassId> stack;
    std::vector<Key> found;
    std::function<bool(ClassId)> dfs = [&](ClassId n) {
      color[n] = 1;
      stack.push_back(n);
      for (auto m : adj[n]) {
        if (color[m] == 1) {
          auto at = std::find(stack.begin(), stack.end(), m);
          for (auto i = at; i != stack.end(); ++i) found.push_back({*i, std::next(i) == stack.end() ? m : *std::next(i)});
          return true;
        }
        if (color[m] == 0 && dfs(m)) return true;
      }
      stack.pop_back();
      color[n] = 2;
      return false;
    };
    for (auto n : graph_.nodes)
      if (color[n] == 0 && dfs(n)) break;
    return found;
  }

  const ProfileMap& profiles_;
  ChtGraph graph_;
};

std::string candidate_provenance(const InheritanceCandidate& c) {
  return std::string(to_string(c.source)) + "@" + hex(c.function) + ":" + std::to_string(c.seq);
}

bool allowed(CandidateSource s, AnalysisMode mode) {
  switch (mode) {
    case AnalysisMode::ctor_only: return s == CandidateSource::ctor_call || s == CandidateSource::ctor_inline;
    case AnalysisMode::ctor_dtor: return s != CandidateSource::overwrite;
    case AnalysisMode::full: return true;
  }
  return true;
}

}  // namespace

ChtGraph build_cht(const ClassTable& classes, const std::vector<InheritanceCandidate>& candidates,
                   const std::vector<OverwritePair>& pairs, const ProfileMap& profiles, const BuildOptions& options) {
  Builder b(classes, profiles);

  auto related = [](ClassId x, ClassId y) { return std::minmax(x, y); };
  std::set<std::pair<ClassId, ClassId>> firm;
  for (const auto& c : candidates)
    if (!c.needs_corroboration && allowed(c.source, options.mode)) firm.insert(related(c.derived, c.base));
  if (options.mode == AnalysisMode::full)
    for (const auto& p : pairs) firm.insert(related(p.earlier, p.later));

  // Ctor evidence first so merged edges keep its kind and offset.
  auto ordered = candidates;
  std::stable_sort(ordered.begin(), ordered.end(), [](const auto& x, const auto& y) {
    return static_cast<int>(x.source) < static_cast<int>(y.source);
  });
  for (const auto& c : ordered) {
    if (!allowed(c.source, options.mode)) continue;
    auto prov = candidate_provenance(c);
    if (c.needs_corroboration && !firm.contains(related(c.derived, c.base))) {
      b.graph().log.push_back("hold " + edge_name(c.derived, c.base) + " (" + prov + "): budget overshoot, uncorroborated");
      continue;
    }
    b.admit(c.derived, c.base, c.secondary_offset, prov);
  }

  if (options.mode == AnalysisMode::full) {
    for (const auto& p : pairs) {
      auto prov = "overwrite@" + hex(p.function) + ":" + std::to_string(p.earlier_seq) + "-" + std::to_string(p.later_seq);
      auto o = orient(OrientQuery{p.later, p.earlier, p.later_table, p.earlier_table}, profiles);
      if (o == Orientation::unoriented || o == Orientation::contradiction) {
        b.graph().log.push_back(std::string(to_string(o)) + " " + node_name(p.later) + "~" + node_name(p.earlier) +
                                " (" + prov + ")");
        continue;
      }
      bool later_derives = o == Orientation::a_derives_b;
      ClassId derived = later_derives ? p.later : p.earlier;
      ClassId base = later_derives ? p.earlier : p.later;
      std::size_t dt = later_derives ? p.later_table : p.earlier_table;
      std::size_t bt = later_derives ? p.earlier_table : p.later_table;
      std::int64_t disp =
          profiles.at(derived).table_displacements.at(dt) - profiles.at(base).table_displacements.at(bt);
      if (disp < 0) {
        b.graph().log.push_back("contradiction " + edge_name(derived, base) + " (" + prov + "): negative displacement");
        continue;
      }
      b.admit(derived, base, disp > 0 ? std::optional<std::int64_t>(disp) : std::nullopt, prov);
    }
  }

  b.break_cycles();
  return b.take();
}

ChtGraph analyze(const FactsTable& facts, const ClassTable& classes, const PipelineOptions& options) {
  auto classified = classify_functions(facts, classes);
  auto candidates = ctor_analysis(facts, classified, classes);
  if (options.mode != AnalysisMode::ctor_only) {
    auto d = dtor_analysis(facts, classified, classes, options.analysis);
    candidates.insert(candidates.end(), d.begin(), d.end());
  }
  auto profiles = derive_profiles(classes, facts);
  std::vector<OverwritePair> pairs;
  if (options.mode == AnalysisMode::full) pairs = overwrite_analysis(facts, classified, classes);
  return build_cht(classes, candidates, pairs, profiles, BuildOptions{options.mode});
}

GraphFormat parse_graph_format(std::string_view name) {
  if (name == "dot") return GraphFormat::dot;
  if (name == "json") return GraphFormat::json;
  throw Error(ErrorKind::UnknownFormat, "unknown graph format `" + std::string(name) + "`");
}

std::string emit(const ChtGraph& graph, GraphFormat format) {
  if (format == GraphFormat::dot) {
    if (graph.nodes.empty()) return "digraph cht {}\n";
    std::ostringstream out;
    out << "digraph cht {\n";
    for (auto n : graph.nodes) out << "  \"" << node_name(n) << "\";\n";
    for (const auto& [k, e] : graph.edges) {
      out << "  \"" << node_name(e.derived) << "\" -> \"" << node_name(e.base) << "\"";
      if (e.kind == EdgeKind::secondary) out << " [style=dashed,label=\"@" << e.offset.value_or(0) << "\"]";
      out << ";\n";
    }
    out << "}\n";
    return out.str();
  }

  nlohmann::json j;
  j["nodes"] = nlohmann::json::array();
  j["edges"] = nlohmann::json::array();
  for (auto n : graph.nodes) j["nodes"].push_back(node_name(n));
  for (const auto& [k, e] : graph.edges) {
    nlohmann::json je;
    je["derived"] = node_name(e.derived);
    je["base"] = node_name(e.base);
    je["kind"] = e.kind == EdgeKind::primary ? "primary" : "secondary";
    if (e.offset) je["offset"] = *e.offset;
    je["provenance"] = std::vector<std::string>(e.provenance.begin(), e.provenance.end());
    j["edges"].push_back(std::move(je));
  }
  return j.dump(2) + "\n";
}

ChtGraph parse_cht_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("CHT JSON: ") + e.what());
  }
  auto id = [](const nlohmann::json& v) {
    auto a = v.is_string() ? parse_hex(v.get<std::string>()) : std::nullopt;
    if (!a) throw Error(ErrorKind::ParseError, "CHT JSON: node ids must be hex strings");
    return class_at(*a);
  };
  ChtGraph g;
  try {
    for (const auto& n : j.at("nodes")) g.nodes.insert(id(n));
    for (const auto& je : j.at("edges")) {
      ChtEdge e;
      e.derived = id(je.at("derived"));
      e.base = id(je.at("base"));
      e.kind = je.value("kind", "primary") == "secondary" ? EdgeKind::secondary : EdgeKind::primary;
      if (je.contains("offset")) e.offset = je.at("offset").get<std::int64_t>();
      for (const auto& p : je.value("provenance", nlohmann::json::array())) e.provenance.insert(p.get<std::string>());
      g.nodes.insert(e.derived);
      g.nodes.insert(e.base);
      g.edges[{e.derived, e.base}] = std::move(e);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("CHT JSON: ") + e.what());
  }
  return g;
}

}  // namespace declassify
