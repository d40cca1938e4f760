#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

// RV32IM instruction decoding, encoding and disassembly. Only 32-bit
// encodings exist here; the compressed extension is not modeled.
namespace odrg::isa {

enum class Op : uint8_t {
  Illegal,
  Lui, Auipc, Jal, Jalr,
  Beq, Bne, Blt, Bge, Bltu, Bgeu,
  Lb, Lh, Lw, Lbu, Lhu,
  Sb, Sh, Sw,
  Addi, Slti, Sltiu, Xori, Ori, Andi, Slli, Srli, Srai,
  Add, Sub, Sll, Slt, Sltu, Xor, Srl, Sra, Or, And,
  Mul, Mulh, Mulhsu, Mulhu, Div, Divu, Rem, Remu,
  Fence, Ecall, Ebreak, Mret, Wfi,
  Csrrw, Csrrs, Csrrc, Csrrwi, Csrrsi, Csrrci,
};

enum class Format : uint8_t { R, I, S, B, U, J, Shift, Load, Csr, CsrImm, Fence, System, None };

struct DecodedInstr {
  Op op = Op::Illegal;
  uint8_t rd = 0;
  uint8_t rs1 = 0;  // also the 5-bit zimm of csr*i forms
  uint8_t rs2 = 0;
  int32_t imm = 0;  // sign-extended immediate; shamt for shifts; fence pred<<4|succ
  uint16_t csr = 0;
  uint32_t raw = 0;

  bool operator==(const DecodedInstr&) const = default;
};

DecodedInstr decode(uint32_t word);

std::string_view mnemonic(Op op);
Format format_of(Op op);
std::optional<Op> op_from_mnemonic(std::string_view name);

bool is_load(Op op);
bool is_store(Op op);
bool is_branch(Op op);

// Encodes the fields of `d` (op, registers, immediate, csr). The caller is
// responsible for range checks; out-of-range immediates are truncated.
uint32_t encode(const DecodedInstr& d);

// Canonical assembly text, e.g. "add x1, x2, x3", "lw x5, -4(x2)",
// "beq x1, x2, -8" (branch and jal targets are printed as pc-relative
// offsets). The assembler accepts this text back.
std::string disassemble(uint32_t word);

std::optional<uint16_t> csr_from_name(std::string_view name);
std::optional<std::string_view> csr_name(uint16_t number);

}  // namespace odrg::isa
