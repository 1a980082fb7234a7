#include "declassify/binary_image.hpp"

#include <elf.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

namespace declassify {

bool SectionImage::read_only() const {
  if (!readable) return false;
  if (!writable) return true;
  return name.starts_with(".data.rel.ro");
}

std::string SectionImage::flags() const {
  std::string f = "---";
  if (readable) f[0] = 'r';
  if (writable) f[1] = 'w';
  if (executable) f[2] = 'x';
  return f;
}

const SectionImage* ElfImage::section_at(Address a) const {
  for (const auto& s : sections)
    if (s.contains(a)) return &s;
  return nullptr;
}

const SectionImage* ElfImage::section_named(std::string_view name) const {
  for (const auto& s : sections)
    if (s.name == name) return &s;
  return nullptr;
}

bool ElfImage::is_executable(Address a) const {
  const auto* s = section_at(a);
  return s != nullptr && s->executable;
}

bool ElfImage::is_read_only(Address a) const {
  const auto* s = section_at(a);
  return s != nullptr && s->read_only();
}

namespace {

template <typename T>
std::optional<T> read_le(const ElfImage& image, Address a) {
  const auto* s = image.section_at(a);
  if (s == nullptr || a + sizeof(T) > s->end()) return std::nullopt;
  T value{};
  std::memcpy(&value, s->bytes.data() + (a - s->virtual_address), sizeof(T));
  return value;
}

}  // namespace

std::optional<std::uint64_t> ElfImage::read_u64(Address a) const { return read_le<std::uint64_t>(*this, a); }
std::optional<std::uint32_t> ElfImage::read_u32(Address a) const { return read_le<std::uint32_t>(*this, a); }

std::optional<std::string> ElfImage::read_cstring(Address a, std::size_t limit) const {
  const auto* s = section_at(a);
  if (s == nullptr) return std::nullopt;
  std::string out;
  for (Address p = a; p < s->end() && out.size() < limit; ++p) {
    char c = static_cast<char>(s->bytes[p - s->virtual_address]);
    if (c == '\0') return out;
    out.push_back(c);
  }
  return std::nullopt;
}

std::optional<std::uint64_t> ElfImage::read_pointer(Address a) const {
  auto raw = read_u64(a);
  if (!raw || *raw != 0) return raw;
  for (const auto& r : relocations) {
    if (r.offset != a) continue;
    if (r.type == R_X86_64_RELATIVE) return static_cast<std::uint64_t>(r.addend);
    if (r.type == R_X86_64_64 || r.type == R_X86_64_GLOB_DAT) {
      if (auto v = dynamic_symbol_value(r.symbol); v && *v != 0) return *v + r.addend;
    }
  }
  return raw;
}

std::optional<Address> ElfImage::dynamic_symbol_value(std::string_view name) const {
  for (const auto& sym : dynamic_symbols)
    if (sym.name == name) return sym.value;
  return std::nullopt;
}

namespace {

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> file) : file_(file) {}

  template <typename T>
  T at(std::uint64_t offset) const {
    if (offset > file_.size() || file_.size() - offset < sizeof(T))
      throw Error(ErrorKind::TruncatedFile, "read of " + std::to_string(sizeof(T)) + " bytes at offset " +
                                                std::to_string(offset) + " past end of file");
    T value{};
    std::memcpy(&value, file_.data() + offset, sizeof(T));
    return value;
  }

  std::span<const std::uint8_t> slice(std::uint64_t offset, std::uint64_t size) const {
    if (offset > file_.size() || file_.size() - offset < size)
      throw Error(ErrorKind::TruncatedFile, "section data at offset " + std::to_string(offset) + " (" +
                                                std::to_string(size) + " bytes) past end of file");
    return file_.subspan(offset, size);
  }

  std::string string_at(std::uint64_t table_offset, std::uint64_t table_size, std::uint32_t index) const {
    if (index >= table_size) return {};
    auto table = slice(table_offset, table_size);
    auto begin = table.begin() + index;
    auto end = std::find(begin, table.end(), std::uint8_t{0});
    return std::string(begin, end);
  }

 private:
  std::span<const std::uint8_t> file_;
};

}  // namespace

ElfImage parse_elf(std::span<const std::uint8_t> file, std::filesystem::path path) {
  if (file.size() < EI_NIDENT || std::memcmp(file.data(), ELFMAG, SELFMAG) != 0)
    throw Error(ErrorKind::NotElf, "missing ELF magic");
  if (file[EI_CLASS] != ELFCLASS64) throw Error(ErrorKind::UnsupportedClass, "only ELF64 objects are supported");
  if (file[EI_DATA] != ELFDATA2LSB) throw Error(ErrorKind::UnsupportedClass, "only little-endian objects are supported");

  Reader in(file);
  const auto header = in.at<Elf64_Ehdr>(0);
  ElfImage image;
  image.path = std::move(path);
  image.entry = header.e_entry;

  if (header.e_shnum == 0) return image;
  if (header.e_shentsize != sizeof(Elf64_Shdr))
    throw Error(ErrorKind::NotElf, "unexpected section header entry size");

  std::vector<Elf64_Shdr> shdrs;
  shdrs.reserve(header.e_shnum);
  for (unsigned i = 0; i < header.e_shnum; ++i)
    shdrs.push_back(in.at<Elf64_Shdr>(header.e_shoff + std::uint64_t{i} * sizeof(Elf64_Shdr)));

  std::uint64_t names_off = 0, names_size = 0;
  if (header.e_shstrndx < shdrs.size()) {
    names_off = shdrs[header.e_shstrndx].sh_offset;
    names_size = shdrs[header.e_shstrndx].sh_size;
  }

  for (const auto& sh : shdrs) {
    if ((sh.sh_flags & SHF_ALLOC) == 0 || sh.sh_size == 0) continue;
    SectionImage s;
    s.name = in.string_at(names_off, names_size, sh.sh_name);
    s.virtual_address = sh.sh_addr;
    s.size = sh.sh_size;
    s.writable = (sh.sh_flags & SHF_WRITE) != 0;
    s.executable = (sh.sh_flags & SHF_EXECINSTR) != 0;
    if (sh.sh_type == SHT_NOBITS) {
      s.bytes.assign(sh.sh_size, 0);
    } else {
      auto data = in.slice(sh.sh_offset, sh.sh_size);
      s.bytes.assign(data.begin(), data.end());
    }
    image.sections.push_back(std::move(s));
  }

  // Dynamic symbols and relocations survive `strip`; they name PLT imports.
  for (std::size_t i = 0; i < shdrs.size(); ++i) {
    const auto& sh = shdrs[i];
    if (sh.sh_type != SHT_DYNSYM || sh.sh_link >= shdrs.size()) continue;
    const auto& strtab = shdrs[sh.sh_link];
    std::vector<DynamicSymbol> symbols;
    for (std::uint64_t off = 0; off + sizeof(Elf64_Sym) <= sh.sh_size; off += sizeof(Elf64_Sym)) {
      auto sym = in.at<Elf64_Sym>(sh.sh_offset + off);
      symbols.push_back({in.string_at(strtab.sh_offset, strtab.sh_size, sym.st_name), sym.st_value});
    }
    image.dynamic_symbols = symbols;
    for (const auto& rsh : shdrs) {
      if (rsh.sh_type != SHT_RELA || rsh.sh_link != i) continue;
      for (std::uint64_t off = 0; off + sizeof(Elf64_Rela) <= rsh.sh_size; off += sizeof(Elf64_Rela)) {
        auto rela = in.at<Elf64_Rela>(rsh.sh_offset + off);
        auto sym_index = ELF64_R_SYM(rela.r_info);
        DynamicRelocation r;
        r.offset = rela.r_offset;
        r.type = static_cast<std::uint32_t>(ELF64_R_TYPE(rela.r_info));
        r.addend = rela.r_addend;
        if (sym_index < symbols.size()) r.symbol = symbols[sym_index].name;
        image.relocations.push_back(std::move(r));
      }
    }
  }
  return image;
}

ElfImage load_elf(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::NotElf, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_elf(bytes, path);
}

std::vector<ImmediateHit> scan_immediates(std::span<const SectionImage> sections) {
  struct Range {
    Address begin, end;
    const std::string* name;
  };
  std::vector<Range> targets;
  for (const auto& s : sections)
    if (s.read_only() && !s.executable && s.size > 0) targets.push_back({s.virtual_address, s.end(), &s.name});
  std::sort(targets.begin(), targets.end(), [](const Range& a, const Range& b) { return a.begin < b.begin; });

  auto lookup = [&](Address v) -> const std::string* {
    auto it = std::upper_bound(targets.begin(), targets.end(), v,
                               [](Address x, const Range& r) { return x < r.begin; });
    if (it == targets.begin()) return nullptr;
    --it;
    return v < it->end ? it->name : nullptr;
  };

  std::vector<ImmediateHit> hits;
  for (const auto& s : sections) {
    if (!s.executable) continue;
    const auto& b = s.bytes;
    for (std::size_t i = 0; i + 4 <= b.size(); ++i) {
      std::uint32_t v32 = 0;
      std::memcpy(&v32, b.data() + i, 4);
      std::optional<std::uint64_t> v64;
      if (i + 8 <= b.size()) {
        std::uint64_t v = 0;
        std::memcpy(&v, b.data() + i, 8);
        v64 = v;
      }
      const Address at = s.virtual_address + i;
      if (v64) {
        if (const auto* name = lookup(*v64)) hits.push_back({at, *v64, *name, 8});
      }
      if (!v64 || *v64 != v32) {
        if (const auto* name = lookup(v32)) hits.push_back({at, v32, *name, 4});
      }
    }
  }
  std::sort(hits.begin(), hits.end(), [](const ImmediateHit& a, const ImmediateHit& b) {
    return a.found_at != b.found_at ? a.found_at < b.found_at : a.value < b.value;
  });
  return hits;
}

}  // namespace declassify
