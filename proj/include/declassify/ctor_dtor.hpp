#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "declassify/facts.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

enum class FunctionKind { ctor, dtor, inlined_host, other };

std::string_view to_string(FunctionKind k);

struct OwnVptrWrite {
  std::uint64_t seq = 0;
  ThisExpr base;
  Address vtable = 0;
};

struct ClassifiedFunction {
  Address address = 0;
  FunctionKind kind = FunctionKind::other;
  std::optional<ClassId> owner;
  std::optional<std::uint64_t> coi_seq;
  std::vector<OwnVptrWrite> own_vptr_writes;
  /// Test 3: a call to a known ctor/dtor precedes the first own vptr write.
  bool pattern_violation = false;
  std::string diagnostic;
};

using Classification = std::map<Address, ClassifiedFunction>;

enum class CandidateSource { ctor_call, ctor_inline, dtor_call, dtor_inline, overwrite };

std::string_view to_string(CandidateSource s);

struct InheritanceCandidate {
  ClassId derived{};
  ClassId base{};
  CandidateSource source = CandidateSource::ctor_call;
  std::optional<std::int64_t> secondary_offset;
  /// Contributing event.
  Address function = 0;
  std::uint64_t seq = 0;
  /// Budget accounting consumed a callee larger than what remained.
  bool needs_corroboration = false;

  friend bool operator==(const InheritanceCandidate&, const InheritanceCandidate&) = default;
};

struct AnalysisOptions {
  /// Literal reading: only dtor calls at or before the COI write count.
  bool alg2_literal = false;
};

Classification classify_functions(const FactsTable& facts, const ClassTable& classes);

std::vector<InheritanceCandidate> ctor_analysis(const FactsTable& facts, const Classification& classified,
                                                const ClassTable& classes);
std::vector<InheritanceCandidate> dtor_analysis(const FactsTable& facts, const Classification& classified,
                                                const ClassTable& classes, const AnalysisOptions& options = {});

}  // namespace declassify
