#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "declassify/facts.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

struct ObjectProfile {
  ClassId class_id{};
  std::map<std::int64_t, CoarseType> layout;
  std::int64_t min_object_size = kPointerWidth;
  std::vector<std::size_t> table_sizes;
  std::vector<std::set<std::size_t>> pure_profiles;
  /// Per table: slots holding a concrete function.
  std::vector<std::set<std::size_t>> concrete_slots;
  std::set<std::int64_t> secondary_offsets;
  /// Per table: |offset_to_top|.
  std::vector<std::int64_t> table_displacements;
  /// Every function entry of every table had facts.
  bool coverage_complete = true;
  std::vector<std::string> diagnostics;
};

using ProfileMap = std::map<ClassId, ObjectProfile>;

ObjectProfile derive_object_profile(const CompleteObjectVTable& cls, const FactsTable& facts);
ProfileMap derive_profiles(const ClassTable& classes, const FactsTable& facts);

enum class Orientation { a_derives_b, b_derives_a, unoriented, contradiction };

std::string_view to_string(Orientation o);

/// Which table of each class carried the relationship (0 = primary).
struct OrientQuery {
  ClassId a{};
  ClassId b{};
  std::size_t a_table = 0;
  std::size_t b_table = 0;
};

Orientation orient(const OrientQuery& q, const ProfileMap& profiles);
inline Orientation orient(ClassId a, ClassId b, const ProfileMap& profiles) { return orient({a, b, 0, 0}, profiles); }

/// The "only if" filters applied to a proposed derived->base edge. Returns the
/// name of the first filter that rejects it, or an empty string.
/// `derived_table` is the derived class's table whose sub-object is `base`.
std::string veto_reason(ClassId derived, std::size_t derived_table, ClassId base, const ProfileMap& profiles);

bool check_secondary_offset(ClassId derived, std::int64_t offset, ClassId base, const ProfileMap& profiles);

/// `class <id> size>=<n> tables=<sizes> pure=<profiles> layout=<off:type,...>`
std::string format_profile(const ObjectProfile& p);

}  // namespace declassify
