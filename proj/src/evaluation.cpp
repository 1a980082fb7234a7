#include "declassify/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <deque>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include <elf.h>

namespace declassify {

GroundTruth parse_ground_truth(std::string_view json_text) {
  GroundTruth gt;
  try {
    auto j = nlohmann::json::parse(json_text);
    for (const auto& c : j.value("classes", nlohmann::json::array())) gt.classes.insert(c.get<std::string>());
    for (const auto& e : j.at("edges")) {
      GtEdge edge{e.at("derived").get<std::string>(), e.at("base").get<std::string>(),
                  e.value("kind", "primary") == "secondary" ? EdgeKind::secondary : EdgeKind::primary};
      gt.classes.insert(edge.derived);
      gt.classes.insert(edge.base);
      gt.edges.push_back(std::move(edge));
    }
    if (j.contains("name_to_vt")) {
      for (const auto& [name, v] : j.at("name_to_vt").items()) {
        if (v.is_null()) {
          gt.name_to_vt[name] = std::nullopt;
          continue;
        }
        auto a = v.is_string() ? parse_hex(v.get<std::string>()) : std::optional<Address>(v.get<Address>());
        if (!a) throw Error(ErrorKind::ParseError, "ground truth: bad address for " + name);
        gt.name_to_vt[name] = *a;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, std::string("ground truth JSON: ") + e.what());
  }
  std::sort(gt.edges.begin(), gt.edges.end());
  gt.edges.erase(std::unique(gt.edges.begin(), gt.edges.end()), gt.edges.end());
  return gt;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_ground_truth(ss.str());
}

std::string serialize_ground_truth(const GroundTruth& gt) {
  nlohmann::json j;
  j["classes"] = std::vector<std::string>(gt.classes.begin(), gt.classes.end());
  j["edges"] = nlohmann::json::array();
  for (const auto& e : gt.edges)
    j["edges"].push_back({{"derived", e.derived}, {"base", e.base},
                          {"kind", e.kind == EdgeKind::primary ? "primary" : "secondary"}});
  j["name_to_vt"] = nlohmann::json::object();
  for (const auto& [name, vt] : gt.name_to_vt)
    j["name_to_vt"][name] = vt ? nlohmann::json(hex0x(*vt)) : nlohmann::json(nullptr);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// RTTI

namespace {

enum class TypeInfoKind { plain, single, multiple };

struct TypeInfoRecord {
  Address address = 0;
  TypeInfoKind kind = TypeInfoKind::plain;
};

constexpr std::pair<std::string_view, TypeInfoKind> kTypeInfoVtables[] = {
    {"_ZTVN10__cxxabiv117__class_type_infoE", TypeInfoKind::plain},
    {"_ZTVN10__cxxabiv120__si_class_type_infoE", TypeInfoKind::single},
    {"_ZTVN10__cxxabiv121__vmi_class_type_infoE", TypeInfoKind::multiple},
};

std::optional<TypeInfoKind> type_info_kind(std::string_view symbol) {
  for (auto [name, kind] : kTypeInfoVtables)
    if (symbol == name) return kind;
  return std::nullopt;
}

std::map<Address, TypeInfoKind> find_type_infos(const ElfImage& image) {
  std::map<Address, TypeInfoKind> out;
  // Copy-relocated type-info vtables (non-PIE): word 0 is the copy plus 16.
  std::map<Address, TypeInfoKind> copied;
  for (const auto& r : image.relocations) {
    auto kind = type_info_kind(r.symbol);
    if (!kind) continue;
    if (r.type == R_X86_64_COPY)
      copied[r.offset + 16] = *kind;
    else if (r.type == R_X86_64_64)
      out[r.offset] = *kind;
  }
  if (!copied.empty()) {
    for (const auto& s : image.sections) {
      if (s.executable || s.bytes.empty()) continue;
      for (Address a = (s.virtual_address + 7) & ~Address{7}; a + 8 <= s.end(); a += 8)
        if (auto v = image.read_u64(a); v && copied.contains(*v)) out[a] = copied.at(*v);
    }
  }
  return out;
}

}  // namespace

GroundTruth parse_rtti(const ElfImage& image, const ClassTable& classes) {
  auto records = find_type_infos(image);
  if (records.empty()) throw Error(ErrorKind::NoRttiFound, "no class type-info records in " + image.path.string());

  std::map<Address, Address> vt_of_typeinfo;
  for (const auto& c : classes.classes())
    if (c.primary.rtti) vt_of_typeinfo.emplace(*c.primary.rtti, c.primary.address);

  GroundTruth gt;
  auto name_of = [&](Address ti) -> std::string {
    if (auto it = vt_of_typeinfo.find(ti); it != vt_of_typeinfo.end()) {
      auto name = hex0x(it->second);
      gt.name_to_vt[name] = it->second;
      return name;
    }
    std::string name = "typeinfo@" + hex0x(ti);
    if (auto p = image.read_pointer(ti + 8))
      if (auto s = image.read_cstring(*p); s && !s->empty()) name = *s;
    gt.name_to_vt[name] = std::nullopt;
    return name;
  };

  for (auto [ti, kind] : records) {
    auto derived = name_of(ti);
    gt.classes.insert(derived);
    if (kind == TypeInfoKind::single) {
      auto base = image.read_pointer(ti + 16);
      if (!base || !records.contains(*base)) continue;
      gt.edges.push_back({derived, name_of(*base), EdgeKind::primary});
    } else if (kind == TypeInfoKind::multiple) {
      auto count = image.read_u32(ti + 20);
      if (!count) continue;
      for (std::uint32_t i = 0; i < *count; ++i) {
        Address entry = ti + 24 + 16 * i;
        auto base = image.read_pointer(entry);
        auto flags = image.read_u64(entry + 8);
        if (!base || !flags || !records.contains(*base)) continue;
        auto offset_flags = static_cast<std::int64_t>(*flags);
        if (offset_flags & 1) continue;  // virtual base: out of scope
        std::int64_t disp = offset_flags >> 8;
        gt.edges.push_back({derived, name_of(*base), disp > 0 ? EdgeKind::secondary : EdgeKind::primary});
      }
    }
  }
  for (const auto& e : gt.edges) {
    gt.classes.insert(e.derived);
    gt.classes.insert(e.base);
  }
  std::sort(gt.edges.begin(), gt.edges.end());
  gt.edges.erase(std::unique(gt.edges.begin(), gt.edges.end()), gt.edges.end());
  return gt;
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

struct Matching {
  std::set<std::string> found;
  std::map<ClassId, std::string> name_of_node;
  std::set<std::pair<std::string, std::string>> gt_all;
  std::map<std::pair<std::string, std::string>, EdgeKind> scored;
  // Per inferred edge: its names and outcome.
  struct Inferred {
    std::string derived, base;
    const ChtEdge* edge = nullptr;
    bool tp = false;
    bool mib = false;
  };
  std::vector<Inferred> inferred;
  std::set<std::pair<std::string, std::string>> matched;
  std::size_t missing = 0;
};

std::optional<Address> identity(const GroundTruth& gt, const std::string& name) {
  if (auto it = gt.name_to_vt.find(name); it != gt.name_to_vt.end()) return it->second;
  if (auto a = parse_hex(name)) return a;
  throw Error(ErrorKind::UnmappableIdentity, "no VTable correspondence for class `" + name + "`");
}

bool mib_path(const Matching& m, const std::string& from, const std::string& to) {
  // A path of length >= 2 through classes that all lack a recovered VTable.
  std::map<std::string, std::vector<std::string>> adj;
  for (const auto& [d, b] : m.gt_all) adj[d].push_back(b);
  std::deque<std::string> queue;
  std::set<std::string> seen;
  for (const auto& n : adj[from])
    if (!m.found.contains(n) && seen.insert(n).second) queue.push_back(n);
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    for (const auto& next : adj[n]) {
      if (next == to) return true;
      if (!m.found.contains(next) && seen.insert(next).second) queue.push_back(next);
    }
  }
  return false;
}

Matching match(const ChtGraph& graph, const GroundTruth& gt, bool restrict_to_found) {
  Matching m;
  std::set<std::string> classes = gt.classes;
  for (const auto& e : gt.edges) {
    classes.insert(e.derived);
    classes.insert(e.base);
  }
  for (const auto& name : classes) {
    auto a = identity(gt, name);
    if (a && graph.nodes.contains(class_at(*a))) {
      m.found.insert(name);
      m.name_of_node.try_emplace(class_at(*a), name);
    } else {
      ++m.missing;
    }
  }
  for (const auto& e : gt.edges) {
    m.gt_all.insert({e.derived, e.base});
    if (restrict_to_found && (!m.found.contains(e.derived) || !m.found.contains(e.base))) continue;
    m.scored.emplace(std::pair{e.derived, e.base}, e.kind);
  }
  auto name = [&](ClassId id) {
    auto it = m.name_of_node.find(id);
    return it == m.name_of_node.end() ? hex0x(to_address(id)) : it->second;
  };
  for (const auto& [k, e] : graph.edges) {
    Matching::Inferred inf{name(e.derived), name(e.base), &e};
    auto key = std::pair{inf.derived, inf.base};
    if (m.scored.contains(key)) {
      inf.tp = true;
      m.matched.insert(key);
    } else if (m.found.contains(inf.derived) && m.found.contains(inf.base)) {
      inf.mib = mib_path(m, inf.derived, inf.base);
    }
    m.inferred.push_back(std::move(inf));
  }
  return m;
}

}  // namespace

ScoreReport score(const ChtGraph& graph, const GroundTruth& gt, bool restrict_to_found) {
  auto m = match(graph, gt, restrict_to_found);
  ScoreReport r;
  for (const auto& inf : m.inferred) {
    if (inf.tp) {
      ++r.tp;
      if (m.scored.at({inf.derived, inf.base}) != inf.edge->kind) ++r.kind_mismatches;
    } else if (inf.mib) {
      ++r.mib_edges;
    } else {
      ++r.fp;
    }
  }
  r.used_edges = m.scored.size();
  r.fn = r.used_edges - m.matched.size();
  r.missing_vtable_classes = m.missing;
  // An empty denominator means nothing was claimed (or nothing was there to find).
  r.precision = r.tp + r.fp == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
  r.recall = r.tp + r.fn == 0 ? 1.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
  return r;
}

std::string format_report(const ScoreReport& r) {
  std::ostringstream out;
  char buf[32];
  out << "tp=" << r.tp << '\n' << "fp=" << r.fp << '\n' << "fn=" << r.fn << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", r.precision);
  out << "precision=" << buf << '\n';
  std::snprintf(buf, sizeof buf, "%.4f", r.recall);
  out << "recall=" << buf << '\n';
  out << "mib_edges=" << r.mib_edges << '\n'
      << "used_edges=" << r.used_edges << '\n'
      << "missing_vtable_classes=" << r.missing_vtable_classes << '\n'
      << "kind_mismatches=" << r.kind_mismatches << '\n';
  return out.str();
}

std::string_view to_string(FalseCategory c) {
  switch (c) {
    case FalseCategory::mib: return "MIB";
    case FalseCategory::actual_false: return "actual_false";
    case FalseCategory::class_vtable_missing: return "class_vtable_missing";
    case FalseCategory::evidence_absent: return "evidence_absent";
    case FalseCategory::direction_unassigned: return "direction_unassigned";
  }
  return "actual_false";
}

std::vector<FalseEntry> falses_report(const ChtGraph& graph, const GroundTruth& gt, bool restrict_to_found) {
  auto m = match(graph, gt, /*restrict_to_found=*/false);
  std::vector<FalseEntry> out;
  for (const auto& inf : m.inferred) {
    if (inf.tp) continue;
    FalseEntry e{true, inf.derived, inf.base, inf.mib ? FalseCategory::mib : FalseCategory::actual_false,
                 std::vector<std::string>(inf.edge->provenance.begin(), inf.edge->provenance.end())};
    out.push_back(std::move(e));
  }

  std::map<std::string, ClassId> node_of;
  for (const auto& [id, name] : m.name_of_node) node_of.emplace(name, id);
  for (const auto& [key, kind] : m.scored) {
    if (m.matched.contains(key)) continue;
    const auto& [d, b] = key;
    bool missing = !m.found.contains(d) || !m.found.contains(b);
    if (missing && restrict_to_found) continue;
    FalseEntry e{false, d, b, FalseCategory::evidence_absent, {}};
    if (missing) {
      e.category = FalseCategory::class_vtable_missing;
    } else {
      auto dn = hex0x(to_address(node_of.at(d)));
      auto bn = hex0x(to_address(node_of.at(b)));
      bool reversed = graph.find(node_of.at(b), node_of.at(d)) != nullptr;
      bool undecided = std::any_of(graph.log.begin(), graph.log.end(), [&](const std::string& line) {
        return (line.starts_with("unoriented") || line.starts_with("contradiction")) &&
               line.find(dn) != std::string::npos && line.find(bn) != std::string::npos;
      });
      if (reversed || undecided) e.category = FalseCategory::direction_unassigned;
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::string format_falses(const std::vector<FalseEntry>& entries) {
  std::ostringstream out;
  for (const auto& e : entries) {
    out << (e.inferred ? "false " : "missed ") << e.derived << " -> " << e.base << " category=" << to_string(e.category);
    if (!e.provenance.empty()) {
      out << " provenance=";
      for (std::size_t i = 0; i < e.provenance.size(); ++i) out << (i ? "," : "") << e.provenance[i];
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace declassify
