#include "declassify/ingest.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <sstream>

namespace declassify {

// ---------------------------------------------------------------------------
// Symbol tests

namespace {

std::string_view strip_plt(std::string_view symbol) {
  if (auto at = symbol.find('@'); at != std::string_view::npos) symbol = symbol.substr(0, at);
  return symbol;
}

}  // namespace

bool is_allocator_symbol(std::string_view symbol) {
  auto s = strip_plt(symbol);
  return s == "_Znwm" || s == "_Znam" || s == "malloc" || s == "calloc" || s == "_ZnwmRKSt9nothrow_t" ||
         s == "_ZnwmSt11align_val_t";
}

bool is_delete_symbol(std::string_view symbol) {
  auto s = strip_plt(symbol);
  return s == "_ZdlPv" || s == "_ZdlPvm" || s == "_ZdaPv" || s == "_ZdaPvm" || s == "free" ||
         s == "_ZdlPvSt11align_val_t" || s == "_ZdlPvmSt11align_val_t";
}

// ---------------------------------------------------------------------------
// .eh_frame

namespace {

class ByteCursor {
 public:
  ByteCursor(const SectionImage& s, std::size_t pos) : s_(s), pos_(pos) {}

  std::size_t pos() const { return pos_; }
  Address address() const { return s_.virtual_address + pos_; }
  void seek(std::size_t p) { pos_ = p; }
  bool ok(std::size_t n = 1) const { return pos_ + n <= s_.bytes.size(); }

  std::uint64_t fixed(std::size_t n) {
    if (!ok(n)) throw Error(ErrorKind::TruncatedFile, ".eh_frame record runs past section end");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < n; ++i) v |= std::uint64_t{s_.bytes[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  std::uint64_t uleb() {
    std::uint64_t v = 0;
    for (int shift = 0;; shift += 7) {
      auto b = fixed(1);
      if (shift < 64) v |= (b & 0x7f) << shift;
      if ((b & 0x80) == 0) break;
    }
    return v;
  }
  std::int64_t sleb() {
    std::int64_t v = 0;
    int shift = 0;
    std::uint64_t b = 0;
    do {
      b = fixed(1);
      if (shift < 64) v |= static_cast<std::int64_t>(b & 0x7f) << shift;
      shift += 7;
    } while (b & 0x80);
    if (shift < 64 && (b & 0x40)) v |= -(std::int64_t{1} << shift);
    return v;
  }
  std::string cstring() {
    std::string out;
    while (ok() && s_.bytes[pos_] != 0) out.push_back(static_cast<char>(s_.bytes[pos_++]));
    ++pos_;
    return out;
  }

  // DW_EH_PE pointer decoding; datarel/textrel bases are not needed on x86-64.
  std::uint64_t encoded(std::uint8_t enc) {
    Address field = address();
    std::uint64_t v = 0;
    switch (enc & 0x0f) {
      case 0x00: v = fixed(8); break;
      case 0x01: v = uleb(); break;
      case 0x02: v = fixed(2); break;
      case 0x03: v = fixed(4); break;
      case 0x04: v = fixed(8); break;
      case 0x09: v = static_cast<std::uint64_t>(sleb()); break;
      case 0x0a: v = static_cast<std::uint64_t>(static_cast<std::int16_t>(fixed(2))); break;
      case 0x0b: v = static_cast<std::uint64_t>(static_cast<std::int32_t>(fixed(4))); break;
      case 0x0c: v = fixed(8); break;
      default: throw Error(ErrorKind::ParseError, "unsupported pointer encoding in .eh_frame");
    }
    if ((enc & 0x70) == 0x10) v += field;
    return v;
  }

 private:
  const SectionImage& s_;
  std::size_t pos_;
};

}  // namespace

std::vector<std::pair<Address, Address>> unwind_function_ranges(const ElfImage& image) {
  std::vector<std::pair<Address, Address>> out;
  const auto* eh = image.section_named(".eh_frame");
  if (eh == nullptr) return out;

  std::map<std::size_t, std::uint8_t> cie_encoding;
  ByteCursor cur(*eh, 0);
  while (cur.ok(4)) {
    std::size_t start = cur.pos();
    std::uint64_t length = cur.fixed(4);
    if (length == 0) break;  // terminator
    if (length == 0xffffffff) length = cur.fixed(8);
    std::size_t body = cur.pos();
    std::size_t next = body + length;
    auto id = static_cast<std::uint32_t>(cur.fixed(4));
    if (id == 0) {
      std::uint8_t enc = 0;
      cur.fixed(1);  // version
      auto aug = cur.cstring();
      if (aug.find("eh") != std::string::npos) cur.fixed(8);
      cur.uleb();
      cur.sleb();
      cur.uleb();  // return register (uleb in version 3, one byte otherwise: both fit)
      if (!aug.empty() && aug[0] == 'z') {
        cur.uleb();
        for (char c : aug.substr(1)) {
          if (c == 'R') {
            enc = static_cast<std::uint8_t>(cur.fixed(1));
          } else if (c == 'P') {
            cur.encoded(static_cast<std::uint8_t>(cur.fixed(1)) & 0x7f);
          } else if (c == 'L') {
            cur.fixed(1);
          }
        }
      }
      cie_encoding[start] = enc;
    } else {
      std::size_t cie = body - id;
      auto it = cie_encoding.find(cie);
      std::uint8_t enc = it == cie_encoding.end() ? 0x1b : it->second;
      Address begin = cur.encoded(enc);
      Address range = cur.encoded(enc & 0x0f);
      if (range != 0) out.emplace_back(begin, begin + range);
    }
    cur.seek(next);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// objdump provider

ObjdumpProvider::ObjdumpProvider(const ElfImage& image, std::set<Address> extra_starts, std::string objdump)
    : image_(image), extra_starts_(std::move(extra_starts)), objdump_(std::move(objdump)) {}

namespace {

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out.push_back(c);
  }
  return out + "'";
}

bool in_code(const ElfImage& image, Address a) {
  const auto* s = image.section_at(a);
  return s != nullptr && s->executable && !s->name.starts_with(".plt");
}

}  // namespace

std::vector<FunctionListing> ObjdumpProvider::functions() {
  std::string cmd =
      "LC_ALL=C " + objdump_ + " -d -M intel --no-show-raw-insn -w " + shell_quote(image_.path.string()) + " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw Error(ErrorKind::ProviderError, "cannot run " + objdump_);
  std::string text;
  std::array<char, 65536> buf{};
  for (std::size_t n; (n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0;) text.append(buf.data(), n);
  int status = ::pclose(pipe);
  if (status != 0 || text.empty())
    throw Error(ErrorKind::ProviderError, objdump_ + " failed on " + image_.path.string());

  std::istringstream in(text);
  auto all = parse_objdump_listing(in);
  std::erase_if(all, [&](const Instruction& i) { return !in_code(image_, i.address); });
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.address < b.address; });

  auto fdes = unwind_function_ranges(image_);
  std::map<Address, Address> fde_end;
  for (auto [b, e] : fdes) fde_end.emplace(b, e);
  auto strictly_inside_fde = [&](Address a) {
    auto it = fde_end.upper_bound(a);
    if (it == fde_end.begin()) return false;
    --it;
    return it->first < a && a < it->second;
  };

  std::set<Address> starts;
  for (auto [b, e] : fdes)
    if (in_code(image_, b)) starts.insert(b);
  std::set<Address> others = extra_starts_;
  others.insert(image_.entry);
  for (const auto& i : all)
    if (i.mnemonic == "call" && i.direct_target) others.insert(*i.direct_target);
  for (std::string_view arr : {".init_array", ".fini_array"}) {
    if (const auto* s = image_.section_named(arr))
      for (Address a = s->virtual_address; a + 8 <= s->end(); a += 8)
        if (auto p = image_.read_pointer(a)) others.insert(*p);
  }
  for (Address a : others)
    if (in_code(image_, a) && !strictly_inside_fde(a)) starts.insert(a);

  std::vector<FunctionListing> out;
  auto insn = all.begin();
  for (auto it = starts.begin(); it != starts.end(); ++it) {
    FunctionListing fn;
    fn.entry = *it;
    auto next = std::next(it);
    fn.end = next == starts.end() ? ~Address{0} : *next;
    if (auto e = fde_end.find(fn.entry); e != fde_end.end()) fn.end = std::min(fn.end, e->second);
    if (const auto* s = image_.section_at(fn.entry)) fn.end = std::min(fn.end, s->end());
    insn = std::lower_bound(insn, all.end(), fn.entry, [](const Instruction& i, Address a) { return i.address < a; });
    for (auto j = insn; j != all.end() && j->address < fn.end; ++j) fn.instructions.push_back(*j);
    if (!fn.instructions.empty()) out.push_back(std::move(fn));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

namespace {

struct Value {
  enum class Kind { unknown, constant, pointer, stack };

  Kind kind = Kind::unknown;
  std::int64_t c = 0;  ///< constant, or offset from the origin / frame
  ThisExpr::Origin origin = ThisExpr::Origin::unknown;
  int index = 0;
  /// Member-access event that loaded this value from the object.
  std::optional<std::size_t> loaded;
  /// Member-access event whose loaded pointer was dereferenced to produce this value.
  std::optional<std::size_t> parent;

  static Value constant(std::int64_t v) { return make(Kind::constant, v); }
  static Value pointer(ThisExpr::Origin o, int k, std::int64_t off = 0) {
    Value out = make(Kind::pointer, off);
    out.origin = o;
    out.index = k;
    return out;
  }
  static Value frame(std::int64_t off) { return make(Kind::stack, off); }
  static Value make(Kind k, std::int64_t c) {
    Value out;
    out.kind = k;
    out.c = c;
    return out;
  }

  bool offsettable() const { return kind == Kind::constant || kind == Kind::pointer || kind == Kind::stack; }
  Value shifted(std::int64_t d) const {
    Value v = *this;
    if (offsettable()) v.c += d;
    return v;
  }
};

int type_rank(CoarseType t) {
  switch (t) {
    case CoarseType::vptr_slot: return 3;
    case CoarseType::code_ptr: return 2;
    case CoarseType::data_ptr: return 1;
    default: return 0;
  }
}

CoarseType int_type(int width) {
  switch (width) {
    case 1: return CoarseType::int8;
    case 2: return CoarseType::int16;
    case 4: return CoarseType::int32;
    case 8: return CoarseType::int64;
    default: return CoarseType::unknown;
  }
}

constexpr std::array<std::string_view, 9> kCallerSaved = {"rax", "rcx", "rdx", "rsi", "rdi", "r8", "r9", "r10", "r11"};
constexpr std::array<std::string_view, 6> kArgRegs = {"rdi", "rsi", "rdx", "rcx", "r8", "r9"};

bool no_destination(std::string_view m) {
  return m == "cmp" || m == "test" || m == "push" || m == "nop" || m == "endbr64" || m == "ret" || m == "leave" ||
         m.starts_with("j") || m == "call" || m.starts_with("ucomis") || m.starts_with("comis") || m == "hlt" ||
         m.starts_with("prefetch") || m == "bt";
}

bool is_vector(std::string_view r) { return r.starts_with("xmm") || r.starts_with("ymm"); }

bool is_caller_saved(std::string_view r) {
  return std::find(kCallerSaved.begin(), kCallerSaved.end(), r) != kCallerSaved.end();
}

/// Registers an instruction writes, ignoring calls.
std::set<std::string> written_registers(const Instruction& insn) {
  std::set<std::string> out;
  const auto& m = insn.mnemonic;
  auto add = [&](const std::string& r) {
    if (is_vector(r)) out.insert("xmm");
    else if (is_caller_saved(r)) out.insert(r);
  };
  const auto& ops = insn.operands;
  if (!no_destination(m) && !ops.empty() && ops[0].kind == Operand::Kind::reg) add(ops[0].reg);
  if (m == "pop" && !ops.empty() && ops[0].kind == Operand::Kind::reg) add(ops[0].reg);
  if ((m == "xchg" || m == "xadd") && ops.size() == 2 && ops[1].kind == Operand::Kind::reg) add(ops[1].reg);
  if (m == "cmpxchg" || m == "cpuid" || m == "rdtsc" || m == "syscall" || m == "mul" || m == "imul" || m == "div" ||
      m == "idiv" || m == "cqo" || m == "cdq" || m == "cdqe" || m == "cwde" || m == "cbw") {
    for (auto r : kCallerSaved) out.insert(std::string(r));
  }
  if (m.starts_with("rep") || m.starts_with("stos") || m.starts_with("movs") || m.starts_with("cmps") ||
      m.starts_with("scas") || m.starts_with("lods"))
    for (auto r : {"rax", "rcx", "rdi", "rsi"}) out.insert(r);
  return out;
}

class Normalizer {
 public:
  Normalizer(const FunctionListing& listing, const ClassTable& classes, const ElfImage* image,
             const CallClobbers* clobbers)
      : listing_(listing), classes_(classes), image_(image), clobbers_(clobbers) {
    for (std::size_t k = 0; k < kArgRegs.size(); ++k)
      regs_[std::string(kArgRegs[k])] = Value::pointer(ThisExpr::Origin::argument, static_cast<int>(k));
    regs_["rsp"] = Value::frame(0);
  }

  FunctionFacts run() {
    for (const auto& insn : listing_.instructions) step(insn);
    FunctionFacts fn;
    fn.address = listing_.entry;
    for (auto& p : events_) append_event(fn, std::move(p));
    fn.max_this_offset = compute_max_this_offset(fn);
    return fn;
  }

 private:
  Value reg(const std::string& name) const {
    auto it = regs_.find(name);
    return it == regs_.end() ? Value{} : it->second;
  }
  void set_reg(const Operand& op, Value v) {
    if (op.kind != Operand::Kind::reg || op.reg == "rip") return;
    if (op.is_vector_reg() || op.size == 8) {
      regs_[op.reg] = v;
    } else if (op.size == 4) {
      // 32-bit writes zero-extend: constants survive, pointers do not.
      if (v.kind == Value::Kind::constant) {
        v.c = static_cast<std::int64_t>(static_cast<std::uint32_t>(v.c));
        v.loaded.reset();
        v.parent.reset();
      } else {
        Value keep;
        keep.loaded = v.loaded;
        keep.parent = v.parent;
        v = keep;
      }
      regs_[op.reg] = v;
    } else {
      regs_[op.reg] = Value{};
    }
  }

  int stack_allocation() {
    if (!stack_id_) stack_id_ = next_allocation_++;
    return *stack_id_;
  }

  ThisExpr to_this(const Value& v) {
    switch (v.kind) {
      case Value::Kind::pointer: return ThisExpr{v.origin, v.index, v.c};
      case Value::Kind::stack: return ThisExpr::allocation(stack_allocation(), v.c);
      default: return ThisExpr::unknown();
    }
  }

  void retype(std::optional<std::size_t> idx, CoarseType t) {
    if (!idx) return;
    auto& m = std::get<MemberAccess>(events_[*idx]);
    if (type_rank(t) > type_rank(m.type)) m.type = t;
  }

  Value address_of(const Operand& op) {
    if (op.segment) return {};
    if (op.absolute) return Value::constant(static_cast<std::int64_t>(*op.absolute));
    if (op.base.empty() && op.index.empty()) return Value::constant(op.disp);
    Value base = op.base.empty() ? Value::constant(0) : reg(op.base);
    if (base.loaded || base.parent) {
      // Dereferencing a pointer fetched from the object.
      retype(base.loaded, CoarseType::data_ptr);
    }
    if (!op.index.empty()) {
      Value idx = reg(op.index);
      if (idx.kind != Value::Kind::constant || !base.offsettable()) return {};
      base = base.shifted(idx.c * op.scale);
    }
    if (!base.offsettable()) return Value{};
    Value out = base.shifted(op.disp);
    out.loaded.reset();
    out.parent.reset();
    return out;
  }

  CoarseType stored_type(const Value& v, int width, std::string_view mnemonic) const {
    if (mnemonic == "movss") return CoarseType::float32;
    if (mnemonic == "movsd") return CoarseType::float64;
    if (v.kind == Value::Kind::constant && width == 8 && image_ != nullptr) {
      auto a = static_cast<Address>(v.c);
      if (image_->is_executable(a)) return CoarseType::code_ptr;
      if (image_->is_read_only(a)) return CoarseType::data_ptr;
    }
    if (v.kind == Value::Kind::pointer || v.kind == Value::Kind::stack) return CoarseType::data_ptr;
    return int_type(width);
  }

  CoarseType loaded_type(int width, std::string_view mnemonic) const {
    if (mnemonic == "movss" || mnemonic == "cvtss2sd" || mnemonic == "addss" || mnemonic == "mulss" ||
        mnemonic == "subss" || mnemonic == "divss" || mnemonic == "ucomiss" || mnemonic == "comiss")
      return CoarseType::float32;
    if (mnemonic == "movsd" || mnemonic == "cvtsd2ss" || mnemonic == "addsd" || mnemonic == "mulsd" ||
        mnemonic == "subsd" || mnemonic == "divsd" || mnemonic == "ucomisd" || mnemonic == "comisd")
      return CoarseType::float64;
    return int_type(width);
  }

  std::optional<std::size_t> member_event(const Value& addr, CoarseType type, AccessMode mode) {
    if (addr.kind != Value::Kind::pointer || addr.origin != ThisExpr::Origin::argument || addr.index != 0)
      return std::nullopt;
    events_.push_back(MemberAccess{to_this(addr), type, mode});
    return events_.size() - 1;
  }

  Value load(const Operand& op, int width, std::string_view mnemonic) {
    Value base = op.base.empty() ? Value{} : reg(op.base);
    Value addr = address_of(op);
    if (addr.kind == Value::Kind::stack) {
      auto it = stack_.find(addr.c);
      if (it != stack_.end() && (width == 8 || width == 0)) return it->second;
      return {};
    }
    Value out;
    if (auto idx = member_event(addr, loaded_type(width, mnemonic), AccessMode::read)) out.loaded = idx;
    if (base.loaded) out.parent = base.loaded;
    return out;
  }

  void store(const Operand& dst, const Value& v, int width, std::string_view mnemonic) {
    Value addr = address_of(dst);
    if (addr.kind == Value::Kind::stack) {
      stack_[addr.c] = (width == 8) ? v : Value{};
      return;
    }
    if (v.kind == Value::Kind::constant && classes_.contains_table(static_cast<Address>(v.c)) &&
        (width == 8 || width == 4)) {
      events_.push_back(VptrWrite{to_this(addr), static_cast<Address>(v.c)});
      return;
    }
    member_event(addr, stored_type(v, width, mnemonic), AccessMode::write);
  }

  Value operand_value(const Operand& op, int width, std::string_view mnemonic) {
    switch (op.kind) {
      case Operand::Kind::reg: {
        Value v = reg(op.reg);
        if (op.is_vector_reg() || op.size == 8) return v;
        if (op.size == 4 && v.kind == Value::Kind::constant)
          return Value::constant(static_cast<std::int64_t>(static_cast<std::uint32_t>(v.c)));
        return {};
      }
      case Operand::Kind::imm:
        if (width == 4) return Value::constant(static_cast<std::int64_t>(static_cast<std::uint32_t>(op.imm)));
        return Value::constant(op.imm);
      case Operand::Kind::mem: return load(op, width, mnemonic);
    }
    return {};
  }

  static int width_of_pair(const Operand& a, const Operand* b) {
    if (a.size != 0) return a.size;
    if (b != nullptr && b->size != 0) return b->size;
    return 0;
  }

  void clobber_caller_saved() {
    for (auto r : kCallerSaved) regs_[std::string(r)] = Value{};
    clobber_vector();
  }

  void clobber_vector() {
    for (auto it = regs_.begin(); it != regs_.end();) it = is_vector(it->first) ? regs_.erase(it) : std::next(it);
  }

  void clobber_for(std::optional<Address> target) {
    const std::set<std::string>* summary = nullptr;
    if (target && clobbers_ != nullptr)
      if (auto it = clobbers_->find(*target); it != clobbers_->end()) summary = &it->second;
    if (summary == nullptr) return clobber_caller_saved();
    for (const auto& r : *summary) {
      if (r == "xmm") clobber_vector();
      else regs_[r] = Value{};
    }
  }

  void emit_call(std::optional<Address> target, const std::string& symbol, bool tail) {
    if (!symbol.empty() && is_delete_symbol(symbol)) {
      events_.push_back(DeleteCall{});
    } else {
      events_.push_back(CallEvent{target, to_this(reg("rdi"))});
    }
    bool allocates = !symbol.empty() && is_allocator_symbol(symbol);
    clobber_for(target);
    if (allocates) regs_["rax"] = Value::pointer(ThisExpr::Origin::allocation, next_allocation_++);
    (void)tail;
  }

  void step(const Instruction& insn) {
    const auto& m = insn.mnemonic;
    const auto& ops = insn.operands;

    if (m == "call") {
      if (insn.direct_target) {
        emit_call(insn.direct_target, insn.target_symbol, false);
        return;
      }
      if (!ops.empty()) {
        if (ops[0].kind == Operand::Kind::reg) {
          Value t = reg(ops[0].reg);
          retype(t.loaded, CoarseType::code_ptr);
          retype(t.parent, CoarseType::vptr_slot);
        } else if (ops[0].kind == Operand::Kind::mem) {
          Value base = ops[0].base.empty() ? Value{} : reg(ops[0].base);
          Value addr = address_of(ops[0]);
          member_event(addr, CoarseType::code_ptr, AccessMode::read);
          retype(base.loaded, CoarseType::vptr_slot);
        }
      }
      emit_call(std::nullopt, {}, false);
      return;
    }
    if (m == "jmp") {
      if (insn.direct_target && (*insn.direct_target < listing_.entry || *insn.direct_target >= listing_.end)) {
        emit_call(insn.direct_target, insn.target_symbol, true);
      } else if (!insn.direct_target && !ops.empty() && ops[0].kind == Operand::Kind::reg) {
        Value t = reg(ops[0].reg);
        retype(t.loaded, CoarseType::code_ptr);
        retype(t.parent, CoarseType::vptr_slot);
      }
      return;
    }
    if (m.starts_with("j") || m == "ret" || m == "nop" || m == "endbr64" || m == "hlt") return;

    if (m == "push" && !ops.empty()) {
      Value v = operand_value(ops[0], 8, m);
      Value sp = reg("rsp").shifted(-8);
      regs_["rsp"] = sp;
      if (sp.kind == Value::Kind::stack) stack_[sp.c] = v;
      return;
    }
    if (m == "pop" && !ops.empty()) {
      Value sp = reg("rsp");
      Value v;
      if (sp.kind == Value::Kind::stack)
        if (auto it = stack_.find(sp.c); it != stack_.end()) v = it->second;
      regs_["rsp"] = sp.shifted(8);
      set_reg(ops[0], v);
      return;
    }
    if (m == "leave") {
      Value sp = reg("rbp");
      Value v;
      if (sp.kind == Value::Kind::stack)
        if (auto it = stack_.find(sp.c); it != stack_.end()) v = it->second;
      regs_["rbp"] = v;
      regs_["rsp"] = sp.shifted(8);
      return;
    }

    if (ops.size() == 2 && (m == "mov" || m == "movabs" || m == "movq" || m == "movss" || m == "movsd" ||
                            m == "movaps" || m == "movups" || m == "movdqa" || m == "movdqu" || m == "movapd")) {
      // movsd with two xmm operands is a register shuffle; with memory it is a scalar move.
      int width = width_of_pair(ops[0], &ops[1]);
      if (m == "movss") width = 4;
      if (m == "movsd" || m == "movq") width = 8;
      Value v = operand_value(ops[1], width, m);
      if (ops[0].kind == Operand::Kind::mem)
        store(ops[0], v, width, m);
      else
        set_reg(ops[0], v);
      return;
    }
    if (ops.size() == 2 && (m == "movzx" || m == "movsx" || m == "movsxd")) {
      Value v = ops[1].kind == Operand::Kind::mem ? load(ops[1], ops[1].size, m) : Value{};
      Value out;
      out.loaded = v.loaded;
      out.parent = v.parent;
      if (v.kind == Value::Kind::constant) out = v;
      regs_[ops[0].reg] = ops[0].kind == Operand::Kind::reg ? out : Value{};
      return;
    }
    if (m == "lea" && ops.size() == 2) {
      set_reg(ops[0], address_of(ops[1]));
      return;
    }
    if ((m == "xor" || m == "sub" || m == "pxor" || m == "xorps" || m == "xorpd") && ops.size() == 2 &&
        ops[0].kind == Operand::Kind::reg && ops[1].kind == Operand::Kind::reg && ops[0].reg == ops[1].reg) {
      set_reg(ops[0], Value::constant(0));
      return;
    }
    if ((m == "add" || m == "sub") && ops.size() == 2 && ops[0].kind == Operand::Kind::reg &&
        ops[1].kind == Operand::Kind::imm) {
      Value v = reg(ops[0].reg);
      std::int64_t d = m == "add" ? ops[1].imm : -ops[1].imm;
      if (ops[0].size == 8 && v.offsettable()) {
        regs_[ops[0].reg] = v.shifted(d);
      } else if (ops[0].size == 8 && (v.loaded || v.parent)) {
        // Pointer arithmetic on a fetched pointer (e.g. vtable slot selection).
        Value keep;
        keep.loaded = v.loaded;
        keep.parent = v.parent;
        regs_[ops[0].reg] = keep;
      } else {
        set_reg(ops[0], Value{});
      }
      return;
    }

    // Generic instruction: model memory accesses, clobber a register destination.
    bool reads_only = no_destination(m);
    for (std::size_t i = 0; i < ops.size(); ++i) {
      if (ops[i].kind != Operand::Kind::mem) continue;
      const Operand* other = ops.size() > 1 ? &ops[i == 0 ? 1 : 0] : nullptr;
      int width = width_of_pair(ops[i], other);
      if (i == 0 && !reads_only) {
        Value addr = address_of(ops[i]);
        if (addr.kind == Value::Kind::stack)
          stack_[addr.c] = Value{};
        else
          member_event(addr, loaded_type(width, m), AccessMode::write);
      } else {
        load(ops[i], width, m);
      }
    }
    if (!reads_only && !ops.empty() && ops[0].kind == Operand::Kind::reg) {
      regs_[ops[0].reg] = Value{};
    }
    if (m == "cqo" || m == "cdq" || m == "cqto") regs_["rdx"] = Value{};
    if (m == "mul" || m == "imul" || m == "div" || m == "idiv") {
      if (ops.size() == 1) {
        regs_["rax"] = Value{};
        regs_["rdx"] = Value{};
      }
    }
    if (m.starts_with("rep") || m.starts_with("stos") || m.starts_with("movs")) {
      regs_["rdi"] = Value{};
      regs_["rsi"] = Value{};
      regs_["rcx"] = Value{};
    }
    if (m == "syscall" || m == "cpuid" || m == "rdtsc") clobber_caller_saved();
  }

  const FunctionListing& listing_;
  const ClassTable& classes_;
  const ElfImage* image_;
  const CallClobbers* clobbers_;
  std::map<std::string, Value> regs_;
  std::map<std::int64_t, Value> stack_;
  std::vector<EventPayload> events_;
  std::optional<int> stack_id_;
  int next_allocation_ = 0;
};

}  // namespace

CallClobbers compute_call_clobbers(const std::vector<FunctionListing>& listings) {
  std::set<std::string> all(kCallerSaved.begin(), kCallerSaved.end());
  all.insert("xmm");
  CallClobbers out;
  std::map<Address, std::vector<Address>> callees;
  for (const auto& l : listings) {
    auto& mine = out[l.entry];
    for (const auto& i : l.instructions) {
      bool leaves = i.mnemonic == "jmp" && i.direct_target && (*i.direct_target < l.entry || *i.direct_target >= l.end);
      if (i.mnemonic == "call" || leaves) {
        if (i.direct_target) callees[l.entry].push_back(*i.direct_target);
        else mine = all;
      } else if (i.mnemonic == "jmp" && !i.direct_target) {
        mine = all;  // computed jump: could be a tail call anywhere
      } else {
        auto w = written_registers(i);
        mine.insert(w.begin(), w.end());
      }
    }
  }
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& [fn, targets] : callees) {
      auto& mine = out[fn];
      auto before = mine.size();
      for (auto t : targets) {
        auto it = out.find(t);
        if (it == out.end()) mine = all;  // external or unknown code
        else mine.insert(it->second.begin(), it->second.end());
        if (mine.size() == all.size()) break;
      }
      changed |= mine.size() != before;
    }
  }
  return out;
}

FunctionFacts normalize_function(const FunctionListing& listing, const ClassTable& classes, const ElfImage* image,
                                 const CallClobbers* clobbers) {
  return Normalizer(listing, classes, image, clobbers).run();
}

FactsTable ingest_binary(const ElfImage* image, const ClassTable& classes, DisassemblyProvider& provider) {
  FactsTable table;
  auto listings = provider.functions();
  auto clobbers = compute_call_clobbers(listings);
  for (const auto& listing : listings) {
    auto fn = normalize_function(listing, classes, image, &clobbers);
    if (!fn.events.empty()) table[fn.address] = std::move(fn);
  }
  return table;
}

}  // namespace declassify
