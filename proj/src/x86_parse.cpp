#include <algorithm>
#include <array>
#include <cctype>
#include <istream>
#include <map>
#include <regex>

#include "declassify/ingest.hpp"

namespace declassify {

namespace {

struct RegInfo {
  std::string_view full;
  int size;
};

const std::map<std::string_view, RegInfo>& register_table() {
  static const auto table = [] {
    std::map<std::string_view, RegInfo> t;
    static constexpr std::array<std::array<std::string_view, 5>, 8> legacy = {{
        {"rax", "eax", "ax", "al", "ah"},
        {"rbx", "ebx", "bx", "bl", "bh"},
        {"rcx", "ecx", "cx", "cl", "ch"},
        {"rdx", "edx", "dx", "dl", "dh"},
        {"rsi", "esi", "si", "sil", ""},
        {"rdi", "edi", "di", "dil", ""},
        {"rbp", "ebp", "bp", "bpl", ""},
        {"rsp", "esp", "sp", "spl", ""},
    }};
    for (const auto& r : legacy) {
      t[r[0]] = {r[0], 8};
      t[r[1]] = {r[0], 4};
      t[r[2]] = {r[0], 2};
      t[r[3]] = {r[0], 1};
      if (!r[4].empty()) t[r[4]] = {r[0], 1};
    }
    static constexpr std::array<std::array<std::string_view, 4>, 8> extended = {{
        {"r8", "r8d", "r8w", "r8b"},
        {"r9", "r9d", "r9w", "r9b"},
        {"r10", "r10d", "r10w", "r10b"},
        {"r11", "r11d", "r11w", "r11b"},
        {"r12", "r12d", "r12w", "r12b"},
        {"r13", "r13d", "r13w", "r13b"},
        {"r14", "r14d", "r14w", "r14b"},
        {"r15", "r15d", "r15w", "r15b"},
    }};
    for (const auto& r : extended) {
      t[r[0]] = {r[0], 8};
      t[r[1]] = {r[0], 4};
      t[r[2]] = {r[0], 2};
      t[r[3]] = {r[0], 1};
    }
    t["rip"] = {"rip", 8};
    return t;
  }();
  return table;
}

std::optional<RegInfo> lookup_register(std::string_view name) {
  const auto& t = register_table();
  if (auto it = t.find(name); it != t.end()) return it->second;
  return std::nullopt;
}

bool is_vector_register(std::string_view name) {
  for (std::string_view p : {"xmm", "ymm", "zmm"}) {
    if (name.starts_with(p) && name.size() > p.size() &&
        std::all_of(name.begin() + p.size(), name.end(), [](char c) { return std::isdigit((unsigned char)c); }))
      return true;
  }
  return false;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace((unsigned char)s.front())) s.remove_prefix(1);
  while (!s.empty() && std::isspace((unsigned char)s.back())) s.remove_suffix(1);
  return s;
}

std::optional<std::int64_t> parse_number(std::string_view s) {
  bool negative = false;
  if (s.starts_with('-')) {
    negative = true;
    s.remove_prefix(1);
  }
  std::optional<std::uint64_t> v;
  if (s.starts_with("0x")) {
    v = parse_hex(s);
  } else if (auto d = parse_int(s)) {
    v = static_cast<std::uint64_t>(*d);
  }
  if (!v) return std::nullopt;
  auto value = static_cast<std::int64_t>(*v);
  return negative ? -value : value;
}

int size_keyword(std::string_view s) {
  static const std::map<std::string_view, int> sizes = {
      {"BYTE", 1},     {"WORD", 2},     {"DWORD", 4},  {"QWORD", 8},   {"TBYTE", 10},
      {"XMMWORD", 16}, {"YMMWORD", 32}, {"ZMMWORD", 64}, {"FWORD", 6}, {"OWORD", 16},
  };
  auto it = sizes.find(s);
  return it == sizes.end() ? 0 : it->second;
}

void parse_memory_terms(std::string_view inner, Operand& op) {
  std::string compact;
  for (char c : inner)
    if (!std::isspace((unsigned char)c)) compact.push_back(c);
  std::size_t i = 0;
  while (i < compact.size()) {
    int sign = 1;
    if (compact[i] == '+' || compact[i] == '-') {
      sign = compact[i] == '-' ? -1 : 1;
      ++i;
    }
    std::size_t j = i;
    while (j < compact.size() && compact[j] != '+' && compact[j] != '-') ++j;
    std::string_view term(compact.data() + i, j - i);
    i = j;
    if (auto star = term.find('*'); star != std::string_view::npos) {
      if (auto r = lookup_register(term.substr(0, star))) op.index = std::string(r->full);
      op.scale = static_cast<int>(parse_number(term.substr(star + 1)).value_or(1));
    } else if (auto r = lookup_register(term)) {
      if (op.base.empty())
        op.base = std::string(r->full);
      else
        op.index = std::string(r->full);
    } else if (auto n = parse_number(term)) {
      op.disp += sign * *n;
    }
  }
}

Operand parse_operand(std::string_view text) {
  Operand op;
  text = trim(text);
  if (auto ptr = text.find(" PTR "); ptr != std::string_view::npos) {
    op.kind = Operand::Kind::mem;
    op.size = size_keyword(trim(text.substr(0, ptr)));
    text = trim(text.substr(ptr + 5));
  }
  if (auto colon = text.find(':'); colon != std::string_view::npos && colon <= 3 && text.find('[') > colon) {
    // fs:0x28, ds:0x402010[...]: segment-relative memory, opaque to the analysis.
    op.kind = Operand::Kind::mem;
    op.segment = true;
    return op;
  }
  if (auto open = text.find('['); open != std::string_view::npos) {
    op.kind = Operand::Kind::mem;
    auto close = text.find(']', open);
    parse_memory_terms(text.substr(open + 1, close - open - 1), op);
    if (op.base.empty() && op.index.empty()) op.absolute = static_cast<Address>(op.disp);
    return op;
  }
  if (op.kind == Operand::Kind::mem) return op;
  if (auto r = lookup_register(text)) {
    op.kind = Operand::Kind::reg;
    op.reg = std::string(r->full);
    op.size = r->size;
    return op;
  }
  if (is_vector_register(text)) {
    op.kind = Operand::Kind::reg;
    op.reg = std::string(text);
    op.size = text.starts_with("xmm") ? 16 : 32;
    return op;
  }
  op.kind = Operand::Kind::imm;
  op.imm = parse_number(text).value_or(0);
  return op;
}

std::vector<std::string_view> split_operands(std::string_view text) {
  std::vector<std::string_view> out;
  int depth = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '[') ++depth;
    if (text[i] == ']') --depth;
    if (text[i] == ',' && depth == 0) {
      out.push_back(text.substr(start, i - start));
      start = i + 1;
    }
  }
  if (start < text.size()) out.push_back(text.substr(start));
  return out;
}

bool is_prefix(std::string_view m) {
  static const std::set<std::string_view> prefixes = {"bnd",  "notrack", "lock",   "rep", "repz", "repnz", "repe",
                                                      "repne", "data16", "data32", "cs",  "ds",   "es",    "ss",
                                                      "fs",   "gs",      "addr32", "rex", "rex.W"};
  return prefixes.contains(m);
}

bool is_branch(std::string_view m) { return m == "call" || m == "jmp" || (m.size() >= 2 && m[0] == 'j'); }

}  // namespace

Instruction parse_intel_instruction(Address address, std::string_view text) {
  Instruction insn;
  insn.address = address;

  std::optional<Address> comment_target;
  if (auto hash = text.find('#'); hash != std::string_view::npos) {
    auto comment = trim(text.substr(hash + 1));
    auto end = comment.find_first_of(" <");
    comment_target = parse_hex(comment.substr(0, end));
    text = text.substr(0, hash);
  }
  text = trim(text);

  std::string_view rest = text;
  for (;;) {
    auto space = rest.find_first_of(" \t");
    std::string_view word = rest.substr(0, space);
    rest = space == std::string_view::npos ? std::string_view{} : trim(rest.substr(space));
    if (is_prefix(word) && !rest.empty()) continue;
    insn.mnemonic = std::string(word);
    break;
  }

  if (is_branch(insn.mnemonic) && !rest.empty() && std::isxdigit((unsigned char)rest[0]) &&
      rest.find('[') == std::string_view::npos) {
    auto space = rest.find(' ');
    if (auto target = parse_hex(rest.substr(0, space)); target && !lookup_register(rest.substr(0, space))) {
      insn.direct_target = target;
      if (auto lt = rest.find('<'); lt != std::string_view::npos) {
        auto gt = rest.find('>', lt);
        auto symbol = rest.substr(lt + 1, gt - lt - 1);
        if (symbol.find('+') == std::string_view::npos) insn.target_symbol = std::string(symbol);
      }
      return insn;
    }
  }

  for (auto part : split_operands(rest)) {
    auto op = parse_operand(part);
    if (op.kind == Operand::Kind::mem && op.base == "rip") op.absolute = comment_target;
    insn.operands.push_back(std::move(op));
  }
  return insn;
}

std::vector<Instruction> parse_objdump_listing(std::istream& in) {
  static const std::regex line_re(R"(^\s*([0-9a-f]+):\s+(.*)$)");
  std::vector<Instruction> out;
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (!std::regex_match(line, m, line_re)) continue;
    std::string body = m[2].str();
    if (body.find("(bad)") != std::string::npos) continue;
    auto addr = parse_hex(m[1].str());
    if (!addr) continue;
    out.push_back(parse_intel_instruction(*addr, body));
  }
  return out;
}

}  // namespace declassify
