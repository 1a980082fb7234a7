#include "declassify/facts.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace declassify {

namespace {

constexpr std::pair<CoarseType, std::string_view> kTypeNames[] = {
    {CoarseType::int8, "int8"},         {CoarseType::int16, "int16"},       {CoarseType::int32, "int32"},
    {CoarseType::int64, "int64"},       {CoarseType::float32, "float32"},   {CoarseType::float64, "float64"},
    {CoarseType::data_ptr, "data_ptr"}, {CoarseType::code_ptr, "code_ptr"}, {CoarseType::vptr_slot, "vptr_slot"},
    {CoarseType::unknown, "unknown"},
};

}  // namespace

std::string_view to_string(CoarseType t) {
  for (auto [type, name] : kTypeNames)
    if (type == t) return name;
  return "unknown";
}

std::optional<CoarseType> parse_coarse_type(std::string_view text) {
  for (auto [type, name] : kTypeNames)
    if (name == text) return type;
  return std::nullopt;
}

std::int64_t width_of(CoarseType t) {
  switch (t) {
    case CoarseType::int8: return 1;
    case CoarseType::int16: return 2;
    case CoarseType::int32:
    case CoarseType::float32: return 4;
    case CoarseType::int64:
    case CoarseType::float64:
    case CoarseType::data_ptr:
    case CoarseType::code_ptr:
    case CoarseType::vptr_slot: return 8;
    case CoarseType::unknown: return 1;
  }
  return 1;
}

bool compatible(CoarseType a, CoarseType b) {
  if (a == CoarseType::unknown || b == CoarseType::unknown) return true;
  return a == b;
}

std::int64_t compute_max_this_offset(const FunctionFacts& facts) {
  std::int64_t best = 0;
  for (const auto& e : facts.events) {
    const ThisExpr* base = nullptr;
    if (const auto* w = e.vptr_write()) base = &w->base;
    if (const auto* m = e.member_access()) base = &m->base;
    if (base != nullptr && base->is_arg0()) best = std::max(best, base->offset);
  }
  return best;
}

void append_event(FunctionFacts& fn, EventPayload payload) {
  std::uint64_t seq = fn.events.empty() ? 0 : fn.events.back().seq + 1;
  fn.events.push_back(FactEvent{fn.address, seq, std::move(payload)});
}

void finalize(FactsTable& table) {
  for (auto& [addr, fn] : table) fn.max_this_offset = compute_max_this_offset(fn);
}

std::string format_this_expr(const ThisExpr& e) {
  std::string origin;
  switch (e.origin) {
    case ThisExpr::Origin::argument: origin = "a" + std::to_string(e.index); break;
    case ThisExpr::Origin::allocation: origin = "h" + std::to_string(e.index); break;
    case ThisExpr::Origin::unknown: origin = "u"; break;
  }
  return origin + ' ' + std::to_string(e.offset);
}

std::string format_event(const FactEvent& e) {
  std::ostringstream out;
  std::string head = hex(e.function) + ' ' + std::to_string(e.seq);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, VptrWrite>) {
          out << "V " << head << ' ' << format_this_expr(p.base) << ' ' << hex(p.vtable);
        } else if constexpr (std::is_same_v<T, CallEvent>) {
          out << "C " << head << ' ' << (p.target ? hex(*p.target) : "u") << ' ' << format_this_expr(p.this_arg);
        } else if constexpr (std::is_same_v<T, MemberAccess>) {
          out << "M " << head << ' ' << format_this_expr(p.base) << ' ' << to_string(p.type) << ' '
              << (p.mode == AccessMode::read ? 'r' : 'w');
        } else {
          out << "D " << head;
        }
      },
      e.payload);
  return out.str();
}

namespace {

std::optional<ThisExpr> parse_this_expr(std::string_view origin, std::string_view offset) {
  auto off = parse_int(offset);
  if (!off) return std::nullopt;
  if (origin == "u") return ThisExpr{ThisExpr::Origin::unknown, 0, *off};
  if (origin.size() < 2 || (origin[0] != 'a' && origin[0] != 'h')) return std::nullopt;
  auto index = parse_int(origin.substr(1));
  if (!index || *index < 0) return std::nullopt;
  auto kind = origin[0] == 'a' ? ThisExpr::Origin::argument : ThisExpr::Origin::allocation;
  return ThisExpr{kind, static_cast<int>(*index), *off};
}

}  // namespace

FactsTable read_facts(std::istream& in) {
  FactsTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::vector<std::string> f;
    for (std::string tok; fields >> tok;) f.push_back(tok);
    auto fail = [&](const std::string& why) {
      return Error(ErrorKind::ParseError, "line " + std::to_string(lineno) + ": " + why);
    };
    if (f.size() < 3 || f[0].size() != 1) throw fail("expected `<kind> <fn> <seq> ...`");

    auto fn = parse_hex(f[1]);
    auto seq = parse_int(f[2]);
    if (!fn || !seq || *seq < 0) throw fail("bad function address or seq");

    FactEvent event{*fn, static_cast<std::uint64_t>(*seq), DeleteCall{}};
    switch (f[0][0]) {
      case 'V': {
        if (f.size() != 6) throw fail("vptr_write needs 6 fields");
        auto base = parse_this_expr(f[3], f[4]);
        auto vt = parse_hex(f[5]);
        if (!base || !vt) throw fail("bad vptr_write operands");
        event.payload = VptrWrite{*base, *vt};
        break;
      }
      case 'C': {
        if (f.size() != 6) throw fail("call needs 6 fields");
        std::optional<Address> target;
        if (f[3] != "u") {
          target = parse_hex(f[3]);
          if (!target) throw fail("bad call target");
        }
        auto arg = parse_this_expr(f[4], f[5]);
        if (!arg) throw fail("bad call this-argument");
        event.payload = CallEvent{target, *arg};
        break;
      }
      case 'M': {
        if (f.size() != 7) throw fail("member_access needs 7 fields");
        auto base = parse_this_expr(f[3], f[4]);
        auto type = parse_coarse_type(f[5]);
        if (!base || !type || (f[6] != "r" && f[6] != "w")) throw fail("bad member_access operands");
        event.payload = MemberAccess{*base, *type, f[6] == "r" ? AccessMode::read : AccessMode::write};
        break;
      }
      case 'D':
        if (f.size() != 3) throw fail("delete_call takes no operands");
        break;
      default:
        throw fail("unknown record kind `" + f[0] + "`");
    }

    auto& facts = table[*fn];
    facts.address = *fn;
    facts.events.push_back(std::move(event));
  }

  for (auto& [addr, fn] : table) {
    std::stable_sort(fn.events.begin(), fn.events.end(),
                     [](const FactEvent& a, const FactEvent& b) { return a.seq < b.seq; });
    for (std::size_t i = 1; i < fn.events.size(); ++i)
      if (fn.events[i].seq == fn.events[i - 1].seq)
        throw Error(ErrorKind::DuplicateSeq,
                    "function " + hex(addr) + " has two events with seq " + std::to_string(fn.events[i].seq));
  }
  finalize(table);
  return table;
}

FactsTable load_facts(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorKind::ParseError, "cannot open " + path.string());
  return read_facts(f);
}

void write_facts(std::ostream& out, const FactsTable& table) {
  for (const auto& [addr, fn] : table)
    for (const auto& e : fn.events) out << format_event(e) << '\n';
}

std::string serialize_facts(const FactsTable& table) {
  std::ostringstream out;
  write_facts(out, table);
  return out.str();
}

}  // namespace declassify
