#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "declassify/binary_image.hpp"
#include "declassify/common.hpp"

namespace declassify {

/// Largest |offset_to_top| accepted as a plausible sub-object displacement.
inline constexpr std::int64_t kMaxObjectSpan = std::int64_t{1} << 20;

enum class EntryKind { function, pure, null };

struct VfptrEntry {
  EntryKind kind = EntryKind::function;
  Address target = 0;

  friend bool operator==(const VfptrEntry&, const VfptrEntry&) = default;
};

struct VTable {
  /// Address of the first vfptr slot; this is the value written into objects.
  Address address = 0;
  std::int64_t offset_to_top = 0;
  std::optional<Address> rtti;
  std::vector<VfptrEntry> vfptrs;

  bool is_primary() const { return offset_to_top == 0; }
  std::size_t function_count() const { return vfptrs.size(); }

  friend bool operator==(const VTable&, const VTable&) = default;
};

struct CompleteObjectVTable {
  ClassId id{};
  VTable primary;
  std::vector<VTable> secondaries;

  std::size_t group_size() const { return 1 + secondaries.size(); }
  /// Table `i` of the group: 0 is the primary.
  const VTable& table(std::size_t i) const { return i == 0 ? primary : secondaries.at(i - 1); }
};

struct VTableGrouping {
  std::vector<CompleteObjectVTable> classes;
  /// Secondary tables seen before any primary table.
  std::vector<VTable> orphans;
};

enum class Rejection { BadOffsetToTop, BadRttiSlot, NoFunctionEntries };

std::string_view to_string(Rejection r);

using Validation = std::variant<VTable, Rejection>;

/// Checks the mandatory-field signature ending at `candidate`. Slots that
/// `claimed_headers` marks as some later table's offset-to-top end the run.
Validation validate_vtable(Address candidate, const ElfImage& image, const std::set<Address>& claimed_headers);

/// Extracts every valid VTable referenced by an immediate in code.
std::vector<VTable> extract_vtables(const ElfImage& image, std::span<const ImmediateHit> hits);

/// Sorts by address and merges each primary with the secondaries that follow it.
VTableGrouping group_vtables(std::vector<VTable> tables);

/// Slot indices holding the pure-virtual marker.
std::set<std::size_t> pure_virtual_profile(const VTable& table);

/// Locates the pure-virtual handler: an explicit override, the imported
/// `__cxa_pure_virtual` stub, or else the most frequent vfptr target lying in
/// a PLT section across distinct tables.
std::optional<Address> detect_pure_handler(const ElfImage& image, std::span<const VTable> tables,
                                           std::optional<Address> override_addr = std::nullopt);

/// Rewrites entries equal to `handler` as pure markers.
void mark_pure_entries(std::vector<VTable>& tables, Address handler);

/// Read-side lookup over a grouped class set.
class ClassTable {
 public:
  struct TableRef {
    ClassId owner{};
    std::size_t index = 0;  ///< 0 = primary
    std::int64_t offset_to_top = 0;

    bool is_primary() const { return index == 0; }
    std::int64_t displacement() const { return -offset_to_top; }
  };

  ClassTable() = default;
  explicit ClassTable(std::vector<CompleteObjectVTable> classes);

  const std::vector<CompleteObjectVTable>& classes() const { return classes_; }
  const CompleteObjectVTable* find(ClassId id) const;
  const CompleteObjectVTable& at(ClassId id) const;
  std::optional<TableRef> table(Address vtable_address) const;
  bool contains_table(Address vtable_address) const { return tables_.contains(vtable_address); }
  /// True when `fn` appears as a vfptr entry of any table.
  bool is_virtual_target(Address fn) const { return vfptr_targets_.contains(fn); }
  /// Number of tables in the class's group; throws UnknownClass.
  std::size_t budget(ClassId id) const;

 private:
  std::vector<CompleteObjectVTable> classes_;
  std::map<ClassId, std::size_t> index_;
  std::map<Address, TableRef> tables_;
  std::set<Address> vfptr_targets_;
};

// Table file: one `T <addr-hex> <offset-to-top> <rtti-hex|-> <entry>...` line
// per VTable; entries are a hex address, `0` (null) or `p` (pure marker).
void write_vtable_file(std::ostream& out, std::span<const VTable> tables);
std::vector<VTable> read_vtable_file(std::istream& in);
std::vector<VTable> load_vtable_file(const std::filesystem::path& path);

}  // namespace declassify
