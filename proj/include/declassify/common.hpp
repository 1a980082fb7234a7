#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace declassify {

using Address = std::uint64_t;

inline constexpr std::int64_t kPointerWidth = 8;

/// Canonical class identifier: the address of the class's primary VTable.
enum class ClassId : Address {};

constexpr Address to_address(ClassId id) { return static_cast<Address>(id); }
constexpr ClassId class_at(Address a) { return static_cast<ClassId>(a); }

enum class ErrorKind {
  NotElf,
  UnsupportedClass,
  TruncatedFile,
  ParseError,
  DuplicateSeq,
  ProviderError,
  UnknownClass,
  UnknownFormat,
  NoRttiFound,
  UnmappableIdentity,
  InvalidConfig,
  Usage,
  Invariant,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Lowercase hex without prefix, as used by the line formats.
std::string hex(Address value);
/// `0x`-prefixed lowercase hex, as used for node labels and reports.
std::string hex0x(Address value);

/// Accepts an optional `0x` prefix. Returns nullopt on any non-hex character.
std::optional<Address> parse_hex(std::string_view text);
std::optional<std::int64_t> parse_int(std::string_view text);

}  // namespace declassify
