#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "declassify/common.hpp"

namespace declassify {

struct SectionImage {
  std::string name;
  Address virtual_address = 0;
  std::uint64_t size = 0;
  std::vector<std::uint8_t> bytes;
  bool readable = true;
  bool writable = false;
  bool executable = false;

  bool contains(Address a) const { return a >= virtual_address && a - virtual_address < size; }
  Address end() const { return virtual_address + size; }
  /// VTables live here. `.data.rel.ro` is writable only until relocation processing.
  bool read_only() const;
  /// `r-x` style flag string.
  std::string flags() const;
};

struct ImmediateHit {
  Address found_at = 0;
  Address value = 0;
  std::string target_section;
  /// 4 for a zero-extended 32-bit window, 8 for a full 64-bit one.
  unsigned width = 8;

  friend bool operator==(const ImmediateHit&, const ImmediateHit&) = default;
};

struct DynamicSymbol {
  std::string name;
  Address value = 0;
};

struct DynamicRelocation {
  Address offset = 0;
  std::uint32_t type = 0;
  std::string symbol;
  std::int64_t addend = 0;
};

/// A loaded ELF64 object: allocatable sections plus the dynamic-linking
/// metadata that survives stripping.
struct ElfImage {
  std::filesystem::path path;
  Address entry = 0;
  std::vector<SectionImage> sections;
  std::vector<DynamicSymbol> dynamic_symbols;
  std::vector<DynamicRelocation> relocations;

  const SectionImage* section_at(Address a) const;
  const SectionImage* section_named(std::string_view name) const;
  bool is_executable(Address a) const;
  bool is_read_only(Address a) const;

  std::optional<std::uint64_t> read_u64(Address a) const;
  std::optional<std::uint32_t> read_u32(Address a) const;
  std::optional<std::string> read_cstring(Address a, std::size_t limit = 4096) const;
  /// Like read_u64, but a zero slot covered by a RELATIVE relocation yields
  /// the relocation addend and one covered by a symbol relocation yields the
  /// symbol value.
  std::optional<std::uint64_t> read_pointer(Address a) const;

  std::optional<Address> dynamic_symbol_value(std::string_view name) const;
};

/// Loads all SHF_ALLOC sections of a 64-bit little-endian ELF file at
/// link-time addresses (load bias 0).
ElfImage load_elf(const std::filesystem::path& path);
ElfImage parse_elf(std::span<const std::uint8_t> file, std::filesystem::path path = {});

/// Every 8-byte (and zero-extended 4-byte) little-endian window of the
/// executable sections whose value lands in a read-only section. One hit per
/// (found_at, value); sorted by found_at then value.
std::vector<ImmediateHit> scan_immediates(std::span<const SectionImage> sections);

}  // namespace declassify
