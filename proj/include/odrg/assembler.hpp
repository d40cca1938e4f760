#pragma once

#include <cstdint>
#include <string_view>

#include "odrg/memory_map.hpp"
#include "odrg/program.hpp"

namespace odrg {

// Two-pass assembler for the supported RV32IM subset.
//
// Accepted syntax, one statement per line:
//   label:                      (may share a line with an instruction)
//   mnemonic operands           # comment
//   .word v[, v...]             (numbers or labels)
//   .org address                (absolute; pads forward with zero words)
//
// Registers: x0..x31 or ABI names. Immediates: decimal, 0x hex, negative,
// a label, or %hi(expr) / %lo(expr). Branch and jal operands are labels or
// numeric pc-relative offsets. Pseudo-instructions: nop, li, la, mv, not,
// neg, j, jr, ret, call, beqz, bnez, bltz, bgez, bgt, ble, bgtu, bleu,
// seqz, snez, csrr, csrw, csrs, csrc, csrwi.
//
// Throws AsmError (UnknownMnemonic, UndefinedLabel, RangeError, Syntax).
ProgramImage assemble(std::string_view source, uint32_t load_addr = map::kImemBase);

}  // namespace odrg
