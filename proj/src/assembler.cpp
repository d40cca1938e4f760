#include "odrg/assembler.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <optional>
#include <string>
#include <vector>

#include "odrg/error.hpp"
#include "odrg/isa.hpp"

namespace odrg {
namespace {

using isa::DecodedInstr;
using isa::Format;
using isa::Op;
using Kind = AsmError::Kind;

struct Statement {
  std::size_t line = 0;
  std::string mnemonic;
  std::vector<std::string> operands;
  uint32_t addr = 0;
  uint32_t size = 0;  // in words
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }
bool is_ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.'; }

std::optional<int64_t> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  bool neg = false;
  if (s.front() == '-' || s.front() == '+') {
    neg = s.front() == '-';
    s.remove_prefix(1);
  }
  int base = 10;
  if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
    base = 16;
    s.remove_prefix(2);
  } else if (s.size() > 2 && s[0] == '0' && (s[1] == 'b' || s[1] == 'B')) {
    base = 2;
    s.remove_prefix(2);
  }
  uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size() || v > 0xFFFF'FFFFull) return std::nullopt;
  return neg ? -static_cast<int64_t>(v) : static_cast<int64_t>(v);
}

std::optional<unsigned> parse_register(std::string_view s) {
  static constexpr std::string_view kAbi[32] = {
      "zero", "ra", "sp", "gp", "tp",  "t0",  "t1", "t2", "s0", "s1", "a0",
      "a1",   "a2", "a3", "a4", "a5",  "a6",  "a7", "s2", "s3", "s4", "s5",
      "s6",   "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5", "t6"};
  s = trim(s);
  if (s == "fp") return 8;
  for (unsigned i = 0; i < 32; ++i)
    if (s == kAbi[i]) return i;
  if (s.size() >= 2 && s[0] == 'x') {
    unsigned v = 0;
    auto [p, ec] = std::from_chars(s.data() + 1, s.data() + s.size(), v);
    if (ec == std::errc{} && p == s.data() + s.size() && v < 32) return v;
  }
  return std::nullopt;
}

int32_t sext12(uint32_t v) { return static_cast<int32_t>(v << 20) >> 20; }

class Assembler {
 public:
  Assembler(std::string_view source, uint32_t load_addr) : load_addr_(load_addr) {
    parse(source);
  }

  ProgramImage run() {
    ProgramImage img;
    img.load_addr = load_addr_;
    for (const auto& st : stmts_) {
      const std::size_t index = (st.addr - load_addr_) / 4;
      if (img.words.size() < index) img.words.resize(index, 0);
      emit(st, img.words);
    }
    img.symbols = std::map<std::string, uint32_t>(labels_.begin(), labels_.end());
    auto start = labels_.find("_start");
    img.entry = start != labels_.end() ? start->second : load_addr_;
    return img;
  }

 private:
  uint32_t load_addr_;
  std::vector<Statement> stmts_;
  std::map<std::string, uint32_t, std::less<>> labels_;

  [[noreturn]] static void fail(Kind k, std::size_t line, const std::string& what) {
    throw AsmError(k, line, what);
  }

  void parse(std::string_view source) {
    uint32_t pc = load_addr_;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= source.size()) {
      std::size_t eol = source.find('\n', pos);
      if (eol == std::string_view::npos) eol = source.size();
      std::string_view line = source.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = trim(line);

      // Leading labels.
      while (!line.empty() && is_ident_start(line.front())) {
        std::size_t i = 0;
        while (i < line.size() && is_ident_char(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j >= line.size() || line[j] != ':') break;
        std::string name(line.substr(0, i));
        if (labels_.count(name)) fail(Kind::Syntax, line_no, "duplicate label '" + name + "'");
        labels_[name] = pc;
        line = trim(line.substr(j + 1));
      }
      if (line.empty()) continue;

      Statement st;
      st.line = line_no;
      std::size_t sp = 0;
      while (sp < line.size() && !std::isspace(static_cast<unsigned char>(line[sp]))) ++sp;
      st.mnemonic = std::string(line.substr(0, sp));
      std::transform(st.mnemonic.begin(), st.mnemonic.end(), st.mnemonic.begin(),
                     [](unsigned char c) { return std::tolower(c); });
      std::string_view rest = trim(line.substr(sp));
      while (!rest.empty()) {
        std::size_t comma = rest.find(',');
        st.operands.emplace_back(trim(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }

      if (st.mnemonic == ".org") {
        if (st.operands.size() != 1) fail(Kind::Syntax, line_no, ".org takes one operand");
        auto target = parse_number(st.operands[0]);
        if (!target) fail(Kind::Syntax, line_no, ".org needs a numeric address");
        if (static_cast<uint32_t>(*target) < pc || (*target & 3))
          fail(Kind::RangeError, line_no, ".org address must be word aligned and not move backwards");
        pc = static_cast<uint32_t>(*target);
        continue;
      }
      st.addr = pc;
      st.size = size_of(st);
      pc += st.size * 4;
      stmts_.push_back(std::move(st));
    }
  }

  uint32_t size_of(const Statement& st) const {
    const std::string& m = st.mnemonic;
    if (m == ".word") return static_cast<uint32_t>(st.operands.size());
    if (m == "la") return 2;
    if (m == "li") {
      if (st.operands.size() == 2) {
        auto v = parse_number(st.operands[1]);
        if (v && *v >= -2048 && *v <= 2047) return 1;
      }
      return 2;
    }
    static constexpr std::string_view kPseudo[] = {
        "nop",  "mv",   "not",  "neg",  "j",    "jr",   "ret",  "call", "beqz", "bnez",
        "bltz", "bgez", "bgt",  "ble",  "bgtu", "bleu", "seqz", "snez", "csrr", "csrw",
        "csrs", "csrc", "csrwi"};
    if (std::find(std::begin(kPseudo), std::end(kPseudo), m) != std::end(kPseudo)) return 1;
    if (isa::op_from_mnemonic(m) && m != "illegal") return 1;
    fail(Kind::UnknownMnemonic, st.line, "unknown mnemonic '" + m + "'");
  }

  // expr := term (('+'|'-') term)*
  int64_t eval(std::string_view s, std::size_t line) const {
    s = trim(s);
    if (s.empty()) fail(Kind::Syntax, line, "missing operand");
    if (s.rfind("%hi(", 0) == 0 || s.rfind("%lo(", 0) == 0) {
      if (s.back() != ')') fail(Kind::Syntax, line, "unterminated " + std::string(s.substr(0, 3)));
      const auto v = static_cast<uint32_t>(eval(s.substr(4, s.size() - 5), line));
      if (s[1] == 'h') return (v + 0x800u) >> 12;
      return sext12(v & 0xFFFu);
    }
    // Split on the last top-level + or - that is not a leading sign.
    for (std::size_t i = s.size(); i-- > 1;) {
      if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'x' && s[i - 1] != 'X') {
        std::string_view lhs = trim(s.substr(0, i));
        if (lhs.empty() || lhs.back() == '(') continue;
        const int64_t r = eval(s.substr(i + 1), line);
        return s[i] == '+' ? eval(lhs, line) + r : eval(lhs, line) - r;
      }
    }
    if (auto n = parse_number(s)) return *n;
    auto it = labels_.find(s);
    if (it == labels_.end()) {
      if (!s.empty() && is_ident_start(s.front()))
        fail(Kind::UndefinedLabel, line, "undefined label '" + std::string(s) + "'");
      fail(Kind::Syntax, line, "bad expression '" + std::string(s) + "'");
    }
    return it->second;
  }

  unsigned reg(const Statement& st, std::size_t i) const {
    if (i >= st.operands.size()) fail(Kind::Syntax, st.line, "missing register operand");
    auto r = parse_register(st.operands[i]);
    if (!r) fail(Kind::Syntax, st.line, "bad register '" + st.operands[i] + "'");
    return *r;
  }

  void expect_operands(const Statement& st, std::size_t n) const {
    if (st.operands.size() != n)
      fail(Kind::Syntax, st.line,
           st.mnemonic + " expects " + std::to_string(n) + " operands, got " +
               std::to_string(st.operands.size()));
  }

  int32_t imm_in(const Statement& st, std::string_view text, int64_t lo, int64_t hi) const {
    const int64_t v = eval(text, st.line);
    if (v < lo || v > hi)
      fail(Kind::RangeError, st.line,
           "immediate " + std::to_string(v) + " outside [" + std::to_string(lo) + ", " +
               std::to_string(hi) + "]");
    return static_cast<int32_t>(v);
  }

  // Branch/jump target: a numeric literal is a pc-relative offset, anything
  // else is an absolute expression (usually a label).
  int32_t rel_target(const Statement& st, std::string_view text, unsigned bits) const {
    int64_t off;
    if (auto n = parse_number(text)) off = *n;
    else off = eval(text, st.line) - static_cast<int64_t>(st.addr);
    const int64_t lim = int64_t{1} << (bits - 1);
    if (off < -lim || off >= lim || (off & 1))
      fail(Kind::RangeError, st.line, "branch offset " + std::to_string(off) + " out of range");
    return static_cast<int32_t>(off);
  }

  // "imm(reg)" or "(reg)".
  std::pair<int32_t, unsigned> mem_operand(const Statement& st, std::string_view text) const {
    auto open = text.rfind('(');
    auto close = text.rfind(')');
    if (open == std::string_view::npos || close != text.size() - 1)
      fail(Kind::Syntax, st.line, "expected offset(register), got '" + std::string(text) + "'");
    auto r = parse_register(text.substr(open + 1, close - open - 1));
    if (!r) fail(Kind::Syntax, st.line, "bad base register in '" + std::string(text) + "'");
    std::string_view off = trim(text.substr(0, open));
    const int32_t imm = off.empty() ? 0 : imm_in(st, off, -2048, 2047);
    return {imm, *r};
  }

  uint16_t csr_operand(const Statement& st, std::string_view text) const {
    if (auto n = isa::csr_from_name(trim(text))) return *n;
    const int64_t v = eval(text, st.line);
    if (v < 0 || v > 0xFFF) fail(Kind::RangeError, st.line, "CSR number out of range");
    return static_cast<uint16_t>(v);
  }

  static DecodedInstr make(Op op, unsigned rd = 0, unsigned rs1 = 0, unsigned rs2 = 0,
                           int32_t imm = 0, uint16_t csr = 0) {
    DecodedInstr d;
    d.op = op;
    d.rd = static_cast<uint8_t>(rd);
    d.rs1 = static_cast<uint8_t>(rs1);
    d.rs2 = static_cast<uint8_t>(rs2);
    d.imm = imm;
    d.csr = csr;
    return d;
  }

  static uint32_t fence_bits(const Statement& st, std::string_view s) {
    uint32_t v = 0;
    for (char c : trim(s)) {
      switch (c) {
        case 'i': v |= 8; break;
        case 'o': v |= 4; break;
        case 'r': v |= 2; break;
        case 'w': v |= 1; break;
        default: fail(Kind::Syntax, st.line, "bad fence set '" + std::string(s) + "'");
      }
    }
    if (v == 0) fail(Kind::Syntax, st.line, "empty fence set");
    return v;
  }

  void emit(const Statement& st, std::vector<uint32_t>& out) const {
    const std::string& m = st.mnemonic;
    const auto& ops = st.operands;
    auto put = [&](const DecodedInstr& d) { out.push_back(isa::encode(d)); };

    if (m == ".word") {
      for (const auto& o : ops) {
        const int64_t v = eval(o, st.line);
        if (v < -0x8000'0000ll || v > 0xFFFF'FFFFll)
          fail(Kind::RangeError, st.line, ".word value out of range");
        out.push_back(static_cast<uint32_t>(v));
      }
      return;
    }

    // Pseudo-instructions.
    if (m == "nop") { expect_operands(st, 0); return put(make(Op::Addi)); }
    if (m == "li" || m == "la") {
      expect_operands(st, 2);
      const unsigned rd = reg(st, 0);
      const int64_t v = eval(ops[1], st.line);
      if (v < -0x8000'0000ll || v > 0xFFFF'FFFFll)
        fail(Kind::RangeError, st.line, "li value out of 32-bit range");
      const auto u = static_cast<uint32_t>(v);
      if (st.size == 1) return put(make(Op::Addi, rd, 0, 0, static_cast<int32_t>(v)));
      put(make(Op::Lui, rd, 0, 0, static_cast<int32_t>(((u + 0x800u) >> 12) << 12)));
      return put(make(Op::Addi, rd, rd, 0, sext12(u & 0xFFFu)));
    }
    if (m == "mv") { expect_operands(st, 2); return put(make(Op::Addi, reg(st, 0), reg(st, 1))); }
    if (m == "not") { expect_operands(st, 2); return put(make(Op::Xori, reg(st, 0), reg(st, 1), 0, -1)); }
    if (m == "neg") { expect_operands(st, 2); return put(make(Op::Sub, reg(st, 0), 0, reg(st, 1))); }
    if (m == "seqz") { expect_operands(st, 2); return put(make(Op::Sltiu, reg(st, 0), reg(st, 1), 0, 1)); }
    if (m == "snez") { expect_operands(st, 2); return put(make(Op::Sltu, reg(st, 0), 0, reg(st, 1))); }
    if (m == "j") { expect_operands(st, 1); return put(make(Op::Jal, 0, 0, 0, rel_target(st, ops[0], 21))); }
    if (m == "call") { expect_operands(st, 1); return put(make(Op::Jal, 1, 0, 0, rel_target(st, ops[0], 21))); }
    if (m == "jr") { expect_operands(st, 1); return put(make(Op::Jalr, 0, reg(st, 0))); }
    if (m == "ret") { expect_operands(st, 0); return put(make(Op::Jalr, 0, 1)); }
    if (m == "beqz" || m == "bnez" || m == "bltz" || m == "bgez") {
      expect_operands(st, 2);
      const Op op = m == "beqz" ? Op::Beq : m == "bnez" ? Op::Bne : m == "bltz" ? Op::Blt : Op::Bge;
      return put(make(op, 0, reg(st, 0), 0, rel_target(st, ops[1], 13)));
    }
    if (m == "bgt" || m == "ble" || m == "bgtu" || m == "bleu") {
      expect_operands(st, 3);
      const Op op = m == "bgt" ? Op::Blt : m == "ble" ? Op::Bge : m == "bgtu" ? Op::Bltu : Op::Bgeu;
      return put(make(op, 0, reg(st, 1), reg(st, 0), rel_target(st, ops[2], 13)));
    }
    if (m == "csrr") {
      expect_operands(st, 2);
      return put(make(Op::Csrrs, reg(st, 0), 0, 0, 0, csr_operand(st, ops[1])));
    }
    if (m == "csrw" || m == "csrs" || m == "csrc") {
      expect_operands(st, 2);
      const Op op = m == "csrw" ? Op::Csrrw : m == "csrs" ? Op::Csrrs : Op::Csrrc;
      return put(make(op, 0, reg(st, 1), 0, 0, csr_operand(st, ops[0])));
    }
    if (m == "csrwi") {
      expect_operands(st, 2);
      return put(make(Op::Csrrwi, 0, static_cast<unsigned>(imm_in(st, ops[1], 0, 31)), 0, 0,
                      csr_operand(st, ops[0])));
    }

    const Op op = *isa::op_from_mnemonic(m);
    switch (isa::format_of(op)) {
      case Format::R:
        expect_operands(st, 3);
        return put(make(op, reg(st, 0), reg(st, 1), reg(st, 2)));
      case Format::I:
        expect_operands(st, 3);
        return put(make(op, reg(st, 0), reg(st, 1), 0, imm_in(st, ops[2], -2048, 2047)));
      case Format::Shift:
        expect_operands(st, 3);
        return put(make(op, reg(st, 0), reg(st, 1), 0, imm_in(st, ops[2], 0, 31)));
      case Format::Load: {
        if (op == Op::Jalr) {
          if (ops.size() == 1) return put(make(op, 1, reg(st, 0)));
          if (ops.size() == 3)
            return put(make(op, reg(st, 0), reg(st, 1), 0, imm_in(st, ops[2], -2048, 2047)));
        }
        expect_operands(st, 2);
        auto [imm, base] = mem_operand(st, ops[1]);
        return put(make(op, reg(st, 0), base, 0, imm));
      }
      case Format::S: {
        expect_operands(st, 2);
        auto [imm, base] = mem_operand(st, ops[1]);
        return put(make(op, 0, base, reg(st, 0), imm));
      }
      case Format::B:
        expect_operands(st, 3);
        return put(make(op, 0, reg(st, 0), reg(st, 1), rel_target(st, ops[2], 13)));
      case Format::U: {
        expect_operands(st, 2);
        const int32_t v = imm_in(st, ops[1], 0, 0xFFFFF);
        return put(make(op, reg(st, 0), 0, 0, static_cast<int32_t>(static_cast<uint32_t>(v) << 12)));
      }
      case Format::J:
        if (ops.size() == 1) return put(make(op, 1, 0, 0, rel_target(st, ops[0], 21)));
        expect_operands(st, 2);
        return put(make(op, reg(st, 0), 0, 0, rel_target(st, ops[1], 21)));
      case Format::Csr:
        expect_operands(st, 3);
        return put(make(op, reg(st, 0), reg(st, 2), 0, 0, csr_operand(st, ops[1])));
      case Format::CsrImm:
        expect_operands(st, 3);
        return put(make(op, reg(st, 0), static_cast<unsigned>(imm_in(st, ops[2], 0, 31)), 0, 0,
                        csr_operand(st, ops[1])));
      case Format::Fence:
        if (ops.empty()) return put(make(op, 0, 0, 0, 0xFF));
        expect_operands(st, 2);
        return put(make(op, 0, 0, 0,
                        static_cast<int32_t>(fence_bits(st, ops[0]) << 4 | fence_bits(st, ops[1]))));
      case Format::System:
        expect_operands(st, 0);
        return put(make(op));
      case Format::None:
        break;
    }
    fail(Kind::UnknownMnemonic, st.line, "unknown mnemonic '" + m + "'");
  }
};

}  // namespace

ProgramImage assemble(std::string_view source, uint32_t load_addr) {
  return Assembler(source, load_addr).run();
}

}  // namespace odrg
