#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "declassify/evaluation.hpp"
#include "declassify/facts.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

inline constexpr std::uint64_t kDefaultSeed = 0x5EED;

struct GeneratorConfig {
  int classes = 10;
  double root_rate = 0.25;         ///< chance a class (other than the first) has no base
  double multi_rate = 0.25;        ///< chance of each additional secondary base (up to 3)
  double composition_rate = 0.25;  ///< chance a class holds a polymorphic member object
  double abstract_rate = 0.1;      ///< chance a class declares its new virtuals pure
  double inline_rate = 0.0;        ///< per call site: splice the callee body instead of calling
  double ctor_elision = 0.0;       ///< chance a class has no out-of-line ctor
  double dtor_elision = 0.0;       ///< chance a class's complete dtor is trivial (empty)
  double vtable_elision = 0.0;     ///< chance a class is never instantiated and loses its VTable
  std::uint64_t seed = kDefaultSeed;

  /// Throws InvalidConfig.
  void validate() const;
};

struct GeneratedClass {
  std::string name;
  std::optional<int> primary_base;
  std::vector<std::pair<int, std::int64_t>> secondary_bases;  ///< (class, displacement)
  std::vector<std::pair<int, std::int64_t>> composed;         ///< (class, offset)
  std::vector<std::pair<std::int64_t, CoarseType>> members;   ///< own data members
  std::int64_t size = 0;
  bool abstract = false;
  bool vtable_elided = false;
  bool ctor_emitted = true;
  bool dtor_empty = false;
  bool instantiated = false;
  std::optional<Address> primary_vtable;
  std::size_t group_size = 1;
  Address ctor = 0;
  Address complete_dtor = 0;
  Address deleting_dtor = 0;
};

struct GeneratedEdge {
  int derived = 0;
  int base = 0;
  EdgeKind kind = EdgeKind::primary;
  std::int64_t offset = 0;
  // Which evidence survives in the emitted facts.
  bool ctor = false;
  bool dtor = false;
  bool overwrite = false;

  bool survives() const { return ctor || dtor || overwrite; }
};

struct Corpus {
  GeneratorConfig config;
  std::vector<GeneratedClass> classes;
  std::vector<GeneratedEdge> edges;
  FactsTable facts;
  std::vector<VTable> tables;
  GroundTruth gt;
  std::size_t ctor_count = 0;
  std::size_t dtor_count = 0;

  ClassTable class_table() const;
  /// Ground truth plus per-edge evidence and object sizes.
  std::string gt_json() const;
};

Corpus generate_corpus(const GeneratorConfig& config);

/// Classes A, B, C, D with D : C, B and a composed A; only D's ctor, with
/// every sub-object constructor inlined.
Corpus running_example();

/// Writes `<prefix>.facts`, `<prefix>.vt`, `<prefix>.gt.json`.
void write_corpus(const Corpus& corpus, const std::filesystem::path& prefix);

}  // namespace declassify
