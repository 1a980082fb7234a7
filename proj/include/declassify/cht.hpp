#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "declassify/ctor_dtor.hpp"
#include "declassify/ola.hpp"

namespace declassify {

struct OverwritePair {
  Address function = 0;
  ThisExpr location;
  ClassId earlier{};
  ClassId later{};
  /// Table index (0 = primary) through which each side was written.
  std::size_t earlier_table = 0;
  std::size_t later_table = 0;
  std::uint64_t earlier_seq = 0;
  std::uint64_t later_seq = 0;
};

std::vector<OverwritePair> overwrite_analysis(const FactsTable& facts, const Classification& classified,
                                              const ClassTable& classes);

enum class EdgeKind { primary, secondary };

struct ChtEdge {
  ClassId derived{};
  ClassId base{};
  EdgeKind kind = EdgeKind::primary;
  std::optional<std::int64_t> offset;
  /// Sorted, e.g. `ctor_inline@401594:3`, `overwrite@4011a0:2-5`.
  std::set<std::string> provenance;
};

struct ChtLogEntry {
  std::string what;
};

struct ChtGraph {
  std::set<ClassId> nodes;
  /// Keyed by (derived, base).
  std::map<std::pair<ClassId, ClassId>, ChtEdge> edges;
  /// Vetoes, unoriented/contradicting pairs, cycle breaks.
  std::vector<std::string> log;

  const ChtEdge* find(ClassId derived, ClassId base) const;
};

enum class AnalysisMode { ctor_only, ctor_dtor, full };

struct BuildOptions {
  AnalysisMode mode = AnalysisMode::full;
};

ChtGraph build_cht(const ClassTable& classes, const std::vector<InheritanceCandidate>& candidates,
                   const std::vector<OverwritePair>& pairs, const ProfileMap& profiles,
                   const BuildOptions& options = {});

struct PipelineOptions {
  AnalysisMode mode = AnalysisMode::full;
  AnalysisOptions analysis;
};

/// classify -> ctor/dtor analysis -> OLA -> overwrite -> CHT.
ChtGraph analyze(const FactsTable& facts, const ClassTable& classes, const PipelineOptions& options = {});

enum class GraphFormat { dot, json };

GraphFormat parse_graph_format(std::string_view name);
std::string emit(const ChtGraph& graph, GraphFormat format);

/// Reads the JSON emitted by `emit`.
ChtGraph parse_cht_json(std::string_view text);

}  // namespace declassify
