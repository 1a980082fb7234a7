#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "declassify/binary_image.hpp"
#include "declassify/cht.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

struct GtEdge {
  std::string derived;
  std::string base;
  EdgeKind kind = EdgeKind::primary;

  friend auto operator<=>(const GtEdge&, const GtEdge&) = default;
};

struct GroundTruth {
  std::set<std::string> classes;
  std::vector<GtEdge> edges;
  /// null: the class is known to have no VTable in the binary.
  std::map<std::string, std::optional<Address>> name_to_vt;
};

GroundTruth parse_ground_truth(std::string_view json_text);
GroundTruth load_ground_truth(const std::filesystem::path& path);
std::string serialize_ground_truth(const GroundTruth& gt);

/// Decodes Itanium type-info records. Classes whose type info is referenced
/// from a recovered VTable are named by that VTable's address (`0x...`).
GroundTruth parse_rtti(const ElfImage& image, const ClassTable& classes);

struct ScoreReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision = 1.0;
  double recall = 1.0;
  std::size_t mib_edges = 0;
  std::size_t used_edges = 0;
  std::size_t missing_vtable_classes = 0;
  std::size_t kind_mismatches = 0;
};

ScoreReport score(const ChtGraph& graph, const GroundTruth& gt, bool restrict_to_found);

/// `key=value` lines.
std::string format_report(const ScoreReport& r);

enum class FalseCategory { mib, actual_false, class_vtable_missing, evidence_absent, direction_unassigned };

std::string_view to_string(FalseCategory c);

struct FalseEntry {
  bool inferred = true;  ///< false: a missed GT edge
  std::string derived;
  std::string base;
  FalseCategory category = FalseCategory::actual_false;
  std::vector<std::string> provenance;
};

std::vector<FalseEntry> falses_report(const ChtGraph& graph, const GroundTruth& gt, bool restrict_to_found);
std::string format_falses(const std::vector<FalseEntry>& entries);

}  // namespace declassify
