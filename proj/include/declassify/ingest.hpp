#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "declassify/binary_image.hpp"
#include "declassify/facts.hpp"
#include "declassify/vtables.hpp"

namespace declassify {

/// A decoded x86-64 operand in Intel syntax. Registers are canonicalised to
/// their 64-bit name; `size` keeps the width actually named.
struct Operand {
  enum class Kind { reg, imm, mem };

  Kind kind = Kind::imm;
  int size = 0;  ///< bytes; 0 when the syntax does not say
  std::string reg;
  std::int64_t imm = 0;
  // Memory operands.
  std::string base;
  std::string index;
  int scale = 1;
  std::int64_t disp = 0;
  bool segment = false;
  /// Absolute address for rip-relative and base-less memory operands.
  std::optional<Address> absolute;

  bool is_vector_reg() const { return kind == Kind::reg && (reg.starts_with("xmm") || reg.starts_with("ymm")); }
};

struct Instruction {
  Address address = 0;
  std::string mnemonic;
  std::vector<Operand> operands;
  std::optional<Address> direct_target;
  /// Symbol the disassembler printed for the direct target, e.g. `_Znwm@plt`.
  std::string target_symbol;
};

struct FunctionListing {
  Address entry = 0;
  Address end = 0;
  std::vector<Instruction> instructions;
};

/// Adapter seam: enumerates functions and yields each one's instructions in
/// a single forward (address-order) sweep.
class DisassemblyProvider {
 public:
  virtual ~DisassemblyProvider() = default;
  virtual std::vector<FunctionListing> functions() = 0;
};

/// Serves pre-built listings; used for hand-written snippets.
class ListingProvider : public DisassemblyProvider {
 public:
  explicit ListingProvider(std::vector<FunctionListing> listings) : listings_(std::move(listings)) {}
  std::vector<FunctionListing> functions() override { return listings_; }

 private:
  std::vector<FunctionListing> listings_;
};

/// Runs GNU objdump over the image and splits the linear sweep at function
/// starts recovered from `.eh_frame`, direct call targets, the entry point,
/// init/fini arrays and the supplied extra starts (vfptr targets).
class ObjdumpProvider : public DisassemblyProvider {
 public:
  ObjdumpProvider(const ElfImage& image, std::set<Address> extra_starts, std::string objdump = "objdump");
  std::vector<FunctionListing> functions() override;

 private:
  const ElfImage& image_;
  std::set<Address> extra_starts_;
  std::string objdump_;
};

/// Parses one instruction body as printed by `objdump -M intel`, e.g.
/// `mov    QWORD PTR [rdi],0x401208`. A trailing `# <addr>` comment resolves
/// rip-relative operands.
Instruction parse_intel_instruction(Address address, std::string_view text);
/// Parses full `objdump -d -M intel --no-show-raw-insn` output.
std::vector<Instruction> parse_objdump_listing(std::istream& in);

/// [start, end) of every FDE in `.eh_frame`.
std::vector<std::pair<Address, Address>> unwind_function_ranges(const ElfImage& image);

/// Symbol-name tests used for allocation / deallocation recognition.
bool is_allocator_symbol(std::string_view symbol);
bool is_delete_symbol(std::string_view symbol);

/// Caller-saved registers each function may overwrite, through its callees
/// too. `xmm` stands for every vector register.
using CallClobbers = std::map<Address, std::set<std::string>>;

/// Without a summary a callee is assumed to clobber every caller-saved
/// register; compilers that allocate registers interprocedurally rely on
/// the narrower set.
CallClobbers compute_call_clobbers(const std::vector<FunctionListing>& listings);

/// Constant-propagates one function's linear sweep into facts. `image`, when
/// given, types stored constants (code vs read-only data pointers).
FunctionFacts normalize_function(const FunctionListing& listing, const ClassTable& classes,
                                 const ElfImage* image = nullptr, const CallClobbers* clobbers = nullptr);

/// Normalizes every provided function; functions without events are omitted.
FactsTable ingest_binary(const ElfImage* image, const ClassTable& classes, DisassemblyProvider& provider);

}  // namespace declassify
