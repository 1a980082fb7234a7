#pragma once

#include <cstring>
#include <filesystem>
#include <sstream>
#include <string>

#include "declassify/binary_image.hpp"
#include "declassify/facts.hpp"
#include "declassify/vtables.hpp"

namespace testing {

inline std::filesystem::path fixture(const std::string& rel) { return std::filesystem::path(DECLASSIFY_FIXTURES) / rel; }

inline declassify::FactsTable facts_from(const std::string& text) {
  std::istringstream in(text);
  return declassify::read_facts(in);
}

inline std::vector<declassify::VTable> tables_from(const std::string& text) {
  std::istringstream in(text);
  return declassify::read_vtable_file(in);
}

inline declassify::ClassTable classes_from(const std::string& text) {
  return declassify::ClassTable(declassify::group_vtables(tables_from(text)).classes);
}

/// In-memory image: a section per call, filled with little-endian words.
struct ImageBuilder {
  declassify::ElfImage image;

  declassify::SectionImage& section(const std::string& name, declassify::Address at, std::size_t size, bool exec,
                                    bool writable = false) {
    declassify::SectionImage s;
    s.name = name;
    s.virtual_address = at;
    s.size = size;
    s.bytes.assign(size, 0);
    s.executable = exec;
    s.writable = writable;
    image.sections.push_back(std::move(s));
    return image.sections.back();
  }

  void put64(declassify::Address at, std::uint64_t v) {
    for (auto& s : image.sections)
      if (s.contains(at)) {
        std::memcpy(s.bytes.data() + (at - s.virtual_address), &v, 8);
        return;
      }
  }
};

}  // namespace testing
