#include "declassify/common.hpp"

#include <charconv>

namespace declassify {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotElf: return "NotElf";
    case ErrorKind::UnsupportedClass: return "UnsupportedClass";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::DuplicateSeq: return "DuplicateSeq";
    case ErrorKind::ProviderError: return "ProviderError";
    case ErrorKind::UnknownClass: return "UnknownClass";
    case ErrorKind::UnknownFormat: return "UnknownFormat";
    case ErrorKind::NoRttiFound: return "NoRttiFound";
    case ErrorKind::UnmappableIdentity: return "UnmappableIdentity";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::Invariant: return "Invariant";
  }
  return "Error";
}

std::string hex(Address value) {
  char buf[24];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value, 16);
  return std::string(buf, end);
}

std::string hex0x(Address value) { return "0x" + hex(value); }

std::optional<Address> parse_hex(std::string_view text) {
  if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
  if (text.empty()) return std::nullopt;
  Address value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 16);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<std::int64_t> parse_int(std::string_view text) {
  if (text.starts_with('+')) text.remove_prefix(1);
  if (text.empty()) return std::nullopt;
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value, 10);
  if (ec != std::errc{} || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

}  // namespace declassify
