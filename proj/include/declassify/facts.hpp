#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "declassify/common.hpp"

namespace declassify {

/// Where a pointer came from, plus a constant displacement.
struct ThisExpr {
  enum class Origin { argument, allocation, unknown };

  Origin origin = Origin::unknown;
  int index = 0;  ///< argument number or allocation id
  std::int64_t offset = 0;

  static ThisExpr argument(int k, std::int64_t off = 0) { return {Origin::argument, k, off}; }
  static ThisExpr allocation(int k, std::int64_t off = 0) { return {Origin::allocation, k, off}; }
  static ThisExpr unknown() { return {}; }

  bool is_arg0() const { return origin == Origin::argument && index == 0; }
  bool is_known() const { return origin != Origin::unknown; }
  bool same_location(const ThisExpr& o) const {
    return is_known() && origin == o.origin && index == o.index && offset == o.offset;
  }

  friend bool operator==(const ThisExpr&, const ThisExpr&) = default;
  friend auto operator<=>(const ThisExpr&, const ThisExpr&) = default;
};

enum class CoarseType { int8, int16, int32, int64, float32, float64, data_ptr, code_ptr, vptr_slot, unknown };

std::string_view to_string(CoarseType t);
std::optional<CoarseType> parse_coarse_type(std::string_view text);
/// Access width implied by a coarse type; unknown counts as one byte.
std::int64_t width_of(CoarseType t);
/// Equal, or either side unknown. vptr_slot only matches itself.
bool compatible(CoarseType a, CoarseType b);

enum class AccessMode { read, write };

struct VptrWrite {
  ThisExpr base;
  Address vtable = 0;
  friend bool operator==(const VptrWrite&, const VptrWrite&) = default;
};

struct CallEvent {
  std::optional<Address> target;
  ThisExpr this_arg;
  friend bool operator==(const CallEvent&, const CallEvent&) = default;
};

struct MemberAccess {
  ThisExpr base;
  CoarseType type = CoarseType::unknown;
  AccessMode mode = AccessMode::read;
  friend bool operator==(const MemberAccess&, const MemberAccess&) = default;
};

struct DeleteCall {
  friend bool operator==(const DeleteCall&, const DeleteCall&) = default;
};

using EventPayload = std::variant<VptrWrite, CallEvent, MemberAccess, DeleteCall>;

struct FactEvent {
  Address function = 0;
  std::uint64_t seq = 0;
  EventPayload payload;

  const VptrWrite* vptr_write() const { return std::get_if<VptrWrite>(&payload); }
  const CallEvent* call() const { return std::get_if<CallEvent>(&payload); }
  const MemberAccess* member_access() const { return std::get_if<MemberAccess>(&payload); }
  bool is_delete() const { return std::holds_alternative<DeleteCall>(payload); }

  friend bool operator==(const FactEvent&, const FactEvent&) = default;
};

struct FunctionFacts {
  Address address = 0;
  std::vector<FactEvent> events;
  std::int64_t max_this_offset = 0;

  friend bool operator==(const FunctionFacts&, const FunctionFacts&) = default;
};

using FactsTable = std::map<Address, FunctionFacts>;

/// Largest constant offset from argument 0 over member accesses and vptr
/// writes; 0 when there are none.
std::int64_t compute_max_this_offset(const FunctionFacts& facts);

/// Appends an event with the next sequence number.
void append_event(FunctionFacts& fn, EventPayload payload);
/// Recomputes max_this_offset for every function.
void finalize(FactsTable& table);

std::string format_this_expr(const ThisExpr& e);
std::string format_event(const FactEvent& e);

FactsTable read_facts(std::istream& in);
FactsTable load_facts(const std::filesystem::path& path);
/// Canonical serialization: functions by address, events by seq.
void write_facts(std::ostream& out, const FactsTable& table);
std::string serialize_facts(const FactsTable& table);

}  // namespace declassify
