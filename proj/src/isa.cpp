#include "odrg/isa.hpp"

#include <array>
#include <utility>

#include <fmt/format.h>

namespace odrg::isa {
namespace {

constexpr int32_t sext(uint32_t value, unsigned bits) {
  const unsigned shift = 32 - bits;
  return static_cast<int32_t>(value << shift) >> shift;
}

struct OpInfo {
  Op op;
  std::string_view name;
  Format format;
};

constexpr std::array kOps = {
    OpInfo{Op::Illegal, "illegal", Format::None},
    OpInfo{Op::Lui, "lui", Format::U},       OpInfo{Op::Auipc, "auipc", Format::U},
    OpInfo{Op::Jal, "jal", Format::J},       OpInfo{Op::Jalr, "jalr", Format::Load},
    OpInfo{Op::Beq, "beq", Format::B},       OpInfo{Op::Bne, "bne", Format::B},
    OpInfo{Op::Blt, "blt", Format::B},       OpInfo{Op::Bge, "bge", Format::B},
    OpInfo{Op::Bltu, "bltu", Format::B},     OpInfo{Op::Bgeu, "bgeu", Format::B},
    OpInfo{Op::Lb, "lb", Format::Load},      OpInfo{Op::Lh, "lh", Format::Load},
    OpInfo{Op::Lw, "lw", Format::Load},      OpInfo{Op::Lbu, "lbu", Format::Load},
    OpInfo{Op::Lhu, "lhu", Format::Load},    OpInfo{Op::Sb, "sb", Format::S},
    OpInfo{Op::Sh, "sh", Format::S},         OpInfo{Op::Sw, "sw", Format::S},
    OpInfo{Op::Addi, "addi", Format::I},     OpInfo{Op::Slti, "slti", Format::I},
    OpInfo{Op::Sltiu, "sltiu", Format::I},   OpInfo{Op::Xori, "xori", Format::I},
    OpInfo{Op::Ori, "ori", Format::I},       OpInfo{Op::Andi, "andi", Format::I},
    OpInfo{Op::Slli, "slli", Format::Shift}, OpInfo{Op::Srli, "srli", Format::Shift},
    OpInfo{Op::Srai, "srai", Format::Shift}, OpInfo{Op::Add, "add", Format::R},
    OpInfo{Op::Sub, "sub", Format::R},       OpInfo{Op::Sll, "sll", Format::R},
    OpInfo{Op::Slt, "slt", Format::R},       OpInfo{Op::Sltu, "sltu", Format::R},
    OpInfo{Op::Xor, "xor", Format::R},       OpInfo{Op::Srl, "srl", Format::R},
    OpInfo{Op::Sra, "sra", Format::R},       OpInfo{Op::Or, "or", Format::R},
    OpInfo{Op::And, "and", Format::R},       OpInfo{Op::Mul, "mul", Format::R},
    OpInfo{Op::Mulh, "mulh", Format::R},     OpInfo{Op::Mulhsu, "mulhsu", Format::R},
    OpInfo{Op::Mulhu, "mulhu", Format::R},   OpInfo{Op::Div, "div", Format::R},
    OpInfo{Op::Divu, "divu", Format::R},     OpInfo{Op::Rem, "rem", Format::R},
    OpInfo{Op::Remu, "remu", Format::R},     OpInfo{Op::Fence, "fence", Format::Fence},
    OpInfo{Op::Ecall, "ecall", Format::System},
    OpInfo{Op::Ebreak, "ebreak", Format::System},
    OpInfo{Op::Mret, "mret", Format::System},
    OpInfo{Op::Wfi, "wfi", Format::System},  OpInfo{Op::Csrrw, "csrrw", Format::Csr},
    OpInfo{Op::Csrrs, "csrrs", Format::Csr}, OpInfo{Op::Csrrc, "csrrc", Format::Csr},
    OpInfo{Op::Csrrwi, "csrrwi", Format::CsrImm},
    OpInfo{Op::Csrrsi, "csrrsi", Format::CsrImm},
    OpInfo{Op::Csrrci, "csrrci", Format::CsrImm},
};

const OpInfo& info(Op op) {
  for (const auto& i : kOps)
    if (i.op == op) return i;
  return kOps[0];
}

constexpr std::array<std::pair<std::string_view, uint16_t>, 10> kCsrNames = {{
    {"mstatus", 0x300},
    {"mie", 0x304},
    {"mtvec", 0x305},
    {"mscratch", 0x340},
    {"mepc", 0x341},
    {"mcause", 0x342},
    {"mtval", 0x343},
    {"mip", 0x344},
    {"mcycle", 0xB00},
    {"mhartid", 0xF14},
}};

// Opcode / funct tables shared by decode and encode.
struct Encoding {
  uint32_t opcode;
  uint32_t funct3;
  uint32_t funct7;
};

Encoding encoding_of(Op op) {
  switch (op) {
    case Op::Lui: return {0x37, 0, 0};
    case Op::Auipc: return {0x17, 0, 0};
    case Op::Jal: return {0x6F, 0, 0};
    case Op::Jalr: return {0x67, 0, 0};
    case Op::Beq: return {0x63, 0, 0};
    case Op::Bne: return {0x63, 1, 0};
    case Op::Blt: return {0x63, 4, 0};
    case Op::Bge: return {0x63, 5, 0};
    case Op::Bltu: return {0x63, 6, 0};
    case Op::Bgeu: return {0x63, 7, 0};
    case Op::Lb: return {0x03, 0, 0};
    case Op::Lh: return {0x03, 1, 0};
    case Op::Lw: return {0x03, 2, 0};
    case Op::Lbu: return {0x03, 4, 0};
    case Op::Lhu: return {0x03, 5, 0};
    case Op::Sb: return {0x23, 0, 0};
    case Op::Sh: return {0x23, 1, 0};
    case Op::Sw: return {0x23, 2, 0};
    case Op::Addi: return {0x13, 0, 0};
    case Op::Slti: return {0x13, 2, 0};
    case Op::Sltiu: return {0x13, 3, 0};
    case Op::Xori: return {0x13, 4, 0};
    case Op::Ori: return {0x13, 6, 0};
    case Op::Andi: return {0x13, 7, 0};
    case Op::Slli: return {0x13, 1, 0x00};
    case Op::Srli: return {0x13, 5, 0x00};
    case Op::Srai: return {0x13, 5, 0x20};
    case Op::Add: return {0x33, 0, 0x00};
    case Op::Sub: return {0x33, 0, 0x20};
    case Op::Sll: return {0x33, 1, 0x00};
    case Op::Slt: return {0x33, 2, 0x00};
    case Op::Sltu: return {0x33, 3, 0x00};
    case Op::Xor: return {0x33, 4, 0x00};
    case Op::Srl: return {0x33, 5, 0x00};
    case Op::Sra: return {0x33, 5, 0x20};
    case Op::Or: return {0x33, 6, 0x00};
    case Op::And: return {0x33, 7, 0x00};
    case Op::Mul: return {0x33, 0, 0x01};
    case Op::Mulh: return {0x33, 1, 0x01};
    case Op::Mulhsu: return {0x33, 2, 0x01};
    case Op::Mulhu: return {0x33, 3, 0x01};
    case Op::Div: return {0x33, 4, 0x01};
    case Op::Divu: return {0x33, 5, 0x01};
    case Op::Rem: return {0x33, 6, 0x01};
    case Op::Remu: return {0x33, 7, 0x01};
    case Op::Fence: return {0x0F, 0, 0};
    case Op::Csrrw: return {0x73, 1, 0};
    case Op::Csrrs: return {0x73, 2, 0};
    case Op::Csrrc: return {0x73, 3, 0};
    case Op::Csrrwi: return {0x73, 5, 0};
    case Op::Csrrsi: return {0x73, 6, 0};
    case Op::Csrrci: return {0x73, 7, 0};
    default: return {0x73, 0, 0};
  }
}

constexpr uint32_t kEcall = 0x00000073;
constexpr uint32_t kEbreak = 0x00100073;
constexpr uint32_t kMret = 0x30200073;
constexpr uint32_t kWfi = 0x10500073;

std::string fence_set(uint32_t bits) {
  std::string s;
  if (bits & 8) s += 'i';
  if (bits & 4) s += 'o';
  if (bits & 2) s += 'r';
  if (bits & 1) s += 'w';
  return s;
}

std::string csr_text(uint16_t csr) {
  if (auto n = csr_name(csr)) return std::string(*n);
  return fmt::format("0x{:03x}", csr);
}

}  // namespace

std::string_view mnemonic(Op op) { return info(op).name; }
Format format_of(Op op) { return info(op).format; }

std::optional<Op> op_from_mnemonic(std::string_view name) {
  for (const auto& i : kOps)
    if (i.op != Op::Illegal && i.name == name) return i.op;
  return std::nullopt;
}

bool is_load(Op op) { return op >= Op::Lb && op <= Op::Lhu; }
bool is_store(Op op) { return op >= Op::Sb && op <= Op::Sw; }
bool is_branch(Op op) { return op >= Op::Beq && op <= Op::Bgeu; }

std::optional<uint16_t> csr_from_name(std::string_view name) {
  for (const auto& [n, v] : kCsrNames)
    if (n == name) return v;
  return std::nullopt;
}

std::optional<std::string_view> csr_name(uint16_t number) {
  for (const auto& [n, v] : kCsrNames)
    if (v == number) return n;
  return std::nullopt;
}

DecodedInstr decode(uint32_t w) {
  DecodedInstr d;
  d.raw = w;
  const uint32_t opcode = w & 0x7F;
  const uint32_t rd = (w >> 7) & 0x1F;
  const uint32_t f3 = (w >> 12) & 0x7;
  const uint32_t rs1 = (w >> 15) & 0x1F;
  const uint32_t rs2 = (w >> 20) & 0x1F;
  const uint32_t f7 = w >> 25;
  d.rd = static_cast<uint8_t>(rd);
  d.rs1 = static_cast<uint8_t>(rs1);
  d.rs2 = static_cast<uint8_t>(rs2);

  auto illegal = [&] {
    DecodedInstr bad;
    bad.raw = w;
    return bad;
  };

  switch (opcode) {
    case 0x37:
    case 0x17:
      d.op = opcode == 0x37 ? Op::Lui : Op::Auipc;
      d.imm = static_cast<int32_t>(w & 0xFFFFF000u);
      d.rs1 = d.rs2 = 0;
      return d;
    case 0x6F:
      d.op = Op::Jal;
      d.imm = sext(((w >> 21) & 0x3FF) << 1 | ((w >> 20) & 1) << 11 | ((w >> 12) & 0xFF) << 12 |
                       (w >> 31) << 20,
                   21);
      d.rs1 = d.rs2 = 0;
      return d;
    case 0x67:
      if (f3 != 0) return illegal();
      d.op = Op::Jalr;
      d.imm = sext(w >> 20, 12);
      d.rs2 = 0;
      return d;
    case 0x63: {
      static constexpr Op kBranch[8] = {Op::Beq,     Op::Bne,     Op::Illegal, Op::Illegal,
                                        Op::Blt,     Op::Bge,     Op::Bltu,    Op::Bgeu};
      if (kBranch[f3] == Op::Illegal) return illegal();
      d.op = kBranch[f3];
      d.imm = sext(((w >> 8) & 0xF) << 1 | ((w >> 25) & 0x3F) << 5 | ((w >> 7) & 1) << 11 |
                       (w >> 31) << 12,
                   13);
      d.rd = 0;
      return d;
    }
    case 0x03: {
      static constexpr Op kLoad[8] = {Op::Lb,  Op::Lh,  Op::Lw,      Op::Illegal,
                                      Op::Lbu, Op::Lhu, Op::Illegal, Op::Illegal};
      if (kLoad[f3] == Op::Illegal) return illegal();
      d.op = kLoad[f3];
      d.imm = sext(w >> 20, 12);
      d.rs2 = 0;
      return d;
    }
    case 0x23: {
      static constexpr Op kStore[8] = {Op::Sb,      Op::Sh,      Op::Sw,      Op::Illegal,
                                       Op::Illegal, Op::Illegal, Op::Illegal, Op::Illegal};
      if (kStore[f3] == Op::Illegal) return illegal();
      d.op = kStore[f3];
      d.imm = sext(((w >> 7) & 0x1F) | (f7 << 5), 12);
      d.rd = 0;
      return d;
    }
    case 0x13: {
      d.rs2 = 0;
      switch (f3) {
        case 0: d.op = Op::Addi; break;
        case 2: d.op = Op::Slti; break;
        case 3: d.op = Op::Sltiu; break;
        case 4: d.op = Op::Xori; break;
        case 6: d.op = Op::Ori; break;
        case 7: d.op = Op::Andi; break;
        case 1:
          if (f7 != 0) return illegal();
          d.op = Op::Slli;
          d.imm = static_cast<int32_t>(rs2);
          return d;
        case 5:
          if (f7 == 0x00) d.op = Op::Srli;
          else if (f7 == 0x20) d.op = Op::Srai;
          else return illegal();
          d.imm = static_cast<int32_t>(rs2);
          return d;
      }
      d.imm = sext(w >> 20, 12);
      return d;
    }
    case 0x33: {
      static constexpr Op kBase[8] = {Op::Add, Op::Sll, Op::Slt, Op::Sltu,
                                      Op::Xor, Op::Srl, Op::Or,  Op::And};
      static constexpr Op kMul[8] = {Op::Mul, Op::Mulh, Op::Mulhsu, Op::Mulhu,
                                     Op::Div, Op::Divu, Op::Rem,    Op::Remu};
      if (f7 == 0x00) d.op = kBase[f3];
      else if (f7 == 0x01) d.op = kMul[f3];
      else if (f7 == 0x20 && f3 == 0) d.op = Op::Sub;
      else if (f7 == 0x20 && f3 == 5) d.op = Op::Sra;
      else return illegal();
      return d;
    }
    case 0x0F:
      // Only the plain FENCE form: fm=0, zero register fields, non-empty sets.
      if (f3 != 0 || rd != 0 || rs1 != 0 || (w >> 28) != 0) return illegal();
      if (((w >> 24) & 0xF) == 0 || ((w >> 20) & 0xF) == 0) return illegal();
      d.op = Op::Fence;
      d.imm = static_cast<int32_t>((w >> 20) & 0xFF);
      d.rs2 = 0;
      return d;
    case 0x73: {
      if (f3 == 0) {
        DecodedInstr s;
        s.raw = w;
        if (w == kEcall) s.op = Op::Ecall;
        else if (w == kEbreak) s.op = Op::Ebreak;
        else if (w == kMret) s.op = Op::Mret;
        else if (w == kWfi) s.op = Op::Wfi;
        return s;
      }
      if (f3 == 4) return illegal();
      static constexpr Op kCsr[8] = {Op::Illegal, Op::Csrrw,  Op::Csrrs,  Op::Csrrc,
                                     Op::Illegal, Op::Csrrwi, Op::Csrrsi, Op::Csrrci};
      d.op = kCsr[f3];
      d.csr = static_cast<uint16_t>(w >> 20);
      d.rs2 = 0;
      return d;
    }
    default:
      return illegal();
  }
}

uint32_t encode(const DecodedInstr& d) {
  const Encoding e = encoding_of(d.op);
  const uint32_t rd = d.rd & 0x1Fu;
  const uint32_t rs1 = d.rs1 & 0x1Fu;
  const uint32_t rs2 = d.rs2 & 0x1Fu;
  const auto imm = static_cast<uint32_t>(d.imm);
  switch (format_of(d.op)) {
    case Format::R:
      return e.funct7 << 25 | rs2 << 20 | rs1 << 15 | e.funct3 << 12 | rd << 7 | e.opcode;
    case Format::I:
    case Format::Load:
      return (imm & 0xFFF) << 20 | rs1 << 15 | e.funct3 << 12 | rd << 7 | e.opcode;
    case Format::Shift:
      return e.funct7 << 25 | (imm & 0x1F) << 20 | rs1 << 15 | e.funct3 << 12 | rd << 7 |
             e.opcode;
    case Format::S:
      return ((imm >> 5) & 0x7F) << 25 | rs2 << 20 | rs1 << 15 | e.funct3 << 12 |
             (imm & 0x1F) << 7 | e.opcode;
    case Format::B:
      return ((imm >> 12) & 1) << 31 | ((imm >> 5) & 0x3F) << 25 | rs2 << 20 | rs1 << 15 |
             e.funct3 << 12 | ((imm >> 1) & 0xF) << 8 | ((imm >> 11) & 1) << 7 | e.opcode;
    case Format::U:
      return (imm & 0xFFFFF000u) | rd << 7 | e.opcode;
    case Format::J:
      return ((imm >> 20) & 1) << 31 | ((imm >> 1) & 0x3FF) << 21 | ((imm >> 11) & 1) << 20 |
             ((imm >> 12) & 0xFF) << 12 | rd << 7 | e.opcode;
    case Format::Csr:
    case Format::CsrImm:
      return static_cast<uint32_t>(d.csr & 0xFFF) << 20 | rs1 << 15 | e.funct3 << 12 | rd << 7 |
             e.opcode;
    case Format::Fence:
      return (imm & 0xFF) << 20 | e.opcode;
    case Format::System:
      switch (d.op) {
        case Op::Ecall: return kEcall;
        case Op::Ebreak: return kEbreak;
        case Op::Mret: return kMret;
        default: return kWfi;
      }
    case Format::None:
      break;
  }
  return 0;
}

std::string disassemble(uint32_t word) {
  const DecodedInstr d = decode(word);
  const std::string_view m = mnemonic(d.op);
  switch (format_of(d.op)) {
    case Format::R:
      return fmt::format("{} x{}, x{}, x{}", m, d.rd, d.rs1, d.rs2);
    case Format::I:
    case Format::Shift:
      return fmt::format("{} x{}, x{}, {}", m, d.rd, d.rs1, d.imm);
    case Format::Load:
      return fmt::format("{} x{}, {}(x{})", m, d.rd, d.imm, d.rs1);
    case Format::S:
      return fmt::format("{} x{}, {}(x{})", m, d.rs2, d.imm, d.rs1);
    case Format::B:
      return fmt::format("{} x{}, x{}, {}", m, d.rs1, d.rs2, d.imm);
    case Format::U:
      return fmt::format("{} x{}, 0x{:x}", m, d.rd, static_cast<uint32_t>(d.imm) >> 12);
    case Format::J:
      return fmt::format("{} x{}, {}", m, d.rd, d.imm);
    case Format::Csr:
      return fmt::format("{} x{}, {}, x{}", m, d.rd, csr_text(d.csr), d.rs1);
    case Format::CsrImm:
      return fmt::format("{} x{}, {}, {}", m, d.rd, csr_text(d.csr), d.rs1);
    case Format::Fence:
      return fmt::format("fence {}, {}", fence_set((d.imm >> 4) & 0xF), fence_set(d.imm & 0xF));
    case Format::System:
      return std::string(m);
    case Format::None:
      break;
  }
  return fmt::format(".word 0x{:08x}", word);
}

}  // namespace odrg::isa
