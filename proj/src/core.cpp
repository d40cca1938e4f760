#include "odrg/core.hpp"

#include <limits>
#include <string>

#include "odrg/error.hpp"
#include "odrg/isa.hpp"
#include "odrg/memory_map.hpp"

namespace odrg {

using isa::Op;

std::optional<std::size_t> csr_slot(uint16_t number) {
  for (std::size_t i = 0; i < kSavedCsrs.size(); ++i)
    if (kSavedCsrs[i] == number) return i;
  return std::nullopt;
}

uint32_t& ArchState::csr_ref(uint16_t number) {
  auto slot = csr_slot(number);
  if (!slot) throw UnknownTarget("unmodeled CSR " + std::to_string(number));
  return csr[*slot];
}

uint32_t ArchState::csr_value(uint16_t number) const {
  auto slot = csr_slot(number);
  if (!slot) throw UnknownTarget("unmodeled CSR " + std::to_string(number));
  return csr[*slot];
}

ArchSnapshot snapshot(const ArchState& s) {
  ArchSnapshot out{};
  std::size_t k = 0;
  for (uint32_t r : s.gpr) out[k++] = r;
  out[k++] = s.pc;
  for (uint32_t c : s.csr) out[k++] = c;
  return out;
}

ArchState restore(const ArchSnapshot& snap) {
  ArchState s;
  std::size_t k = 0;
  for (auto& r : s.gpr) r = snap[k++];
  s.pc = snap[k++];
  for (auto& c : s.csr) c = snap[k++];
  return s;
}

ArchState flip_bit(ArchState state, const RegisterTarget& target, unsigned bit) {
  if (bit > 31) throw UnknownTarget("bit index " + std::to_string(bit) + " out of range");
  const uint32_t mask = 1u << bit;
  if (const auto* g = std::get_if<GprTarget>(&target)) {
    if (g->index > 31) throw UnknownTarget("no register x" + std::to_string(g->index));
    if (g->index != 0) state.gpr[g->index - 1] ^= mask;
  } else if (std::holds_alternative<PcTarget>(target)) {
    state.pc ^= mask;
  } else {
    state.csr_ref(std::get<CsrTarget>(target).number) ^= mask;
  }
  return state;
}

ArchState take_irq(ArchState s, uint8_t irq_cause) {
  uint32_t& mstatus = s.csr_ref(csr::kMstatus);
  s.csr_ref(csr::kMepc) = s.pc;
  s.csr_ref(csr::kMcause) = kInterruptBit | (irq_cause & 0x1Fu);
  const bool mie = mstatus & csr::kMstatusMie;
  mstatus = (mstatus & ~(csr::kMstatusMie | csr::kMstatusMpie)) | (mie ? csr::kMstatusMpie : 0);
  s.pc = s.csr_value(csr::kMtvec) & ~3u;
  return s;
}

// ---------------------------------------------------------------------------

unsigned signal_width(Signal s) {
  switch (s) {
    case Signal::FetchAddr:
    case Signal::DataAddr:
    case Signal::DataWdata:
      return 32;
    case Signal::DataByteEnable:
      return 4;
    default:
      return 1;
  }
}

namespace {
constexpr const char* kSignalNames[kNumSignals] = {
    "fetch_valid", "fetch_addr",  "data_valid",  "data_addr",   "data_write",
    "data_be",     "data_wdata",  "barrier_hit", "trap_return", "sleeping",
};

// Word/bit position of each signal inside a PackedInterface.
struct Lane {
  unsigned word;
  unsigned shift;
};
Lane lane_of(Signal s) {
  switch (s) {
    case Signal::FetchAddr: return {0, 0};
    case Signal::DataAddr: return {1, 0};
    case Signal::DataWdata: return {2, 0};
    case Signal::FetchValid: return {3, 0};
    case Signal::DataValid: return {3, 1};
    case Signal::DataWrite: return {3, 2};
    case Signal::DataByteEnable: return {3, 3};
    case Signal::BarrierHit: return {3, 7};
    case Signal::TrapReturn: return {3, 8};
    case Signal::Sleeping: return {3, 9};
  }
  return {3, 0};
}
}  // namespace

const char* signal_name(Signal s) { return kSignalNames[static_cast<std::size_t>(s)]; }

std::optional<Signal> signal_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumSignals; ++i)
    if (name == kSignalNames[i]) return static_cast<Signal>(i);
  return std::nullopt;
}

PackedInterface pack(const CoreInterface& i) {
  PackedInterface p{};
  p[0] = i.fetch_req.addr;
  p[1] = i.data_req.addr;
  p[2] = i.data_req.wdata;
  p[3] = static_cast<uint32_t>(i.fetch_req.valid) | static_cast<uint32_t>(i.data_req.valid) << 1 |
         static_cast<uint32_t>(i.data_req.write) << 2 |
         static_cast<uint32_t>(i.data_req.byte_enable & 0xF) << 3 |
         static_cast<uint32_t>(i.event_out.barrier_hit) << 7 |
         static_cast<uint32_t>(i.event_out.trap_return) << 8 |
         static_cast<uint32_t>(i.sleeping) << 9;
  return p;
}

CoreInterface unpack(const PackedInterface& p) {
  CoreInterface i;
  i.fetch_req.addr = p[0];
  i.data_req.addr = p[1];
  i.data_req.wdata = p[2];
  i.fetch_req.valid = p[3] & 1;
  i.data_req.valid = (p[3] >> 1) & 1;
  i.data_req.write = (p[3] >> 2) & 1;
  i.data_req.byte_enable = static_cast<uint8_t>((p[3] >> 3) & 0xF);
  i.event_out.barrier_hit = (p[3] >> 7) & 1;
  i.event_out.trap_return = (p[3] >> 8) & 1;
  i.sleeping = (p[3] >> 9) & 1;
  return i;
}

CoreInterface flip_interface_bit(CoreInterface i, Signal s, unsigned bit) {
  if (bit >= signal_width(s))
    throw UnknownTarget(std::string("bit ") + std::to_string(bit) + " out of range for " +
                        signal_name(s));
  const Lane lane = lane_of(s);
  PackedInterface p = pack(i);
  p[lane.word] ^= 1u << (lane.shift + bit);
  return unpack(p);
}

// ---------------------------------------------------------------------------

CoreState reset_core(uint32_t boot_addr, uint32_t hartid) {
  CoreState s;
  s.arch.pc = boot_addr;
  s.arch.csr_ref(csr::kMstatus) = kResetMstatus;
  s.arch.csr_ref(csr::kMhartid) = hartid;
  return s;
}

CoreInterface outputs(const CoreState& s) {
  CoreInterface o;
  if (s.sleeping) {
    o.sleeping = true;
    return o;
  }
  if (s.busy == 0) {
    o.fetch_req.valid = true;
    o.fetch_req.addr = s.arch.pc;
  }
  if (s.mem.active) {
    o.data_req.valid = true;
    o.data_req.addr = s.mem.addr;
    o.data_req.write = s.mem.write;
    if (s.mem.write) {
      o.data_req.byte_enable = s.mem.byte_enable;
      o.data_req.wdata = s.mem.wdata;
    } else {
      o.event_out.barrier_hit = s.mem.addr == map::kEuBarrierAddr;
    }
  }
  o.event_out.trap_return = s.trap_return;
  return o;
}

namespace {

void enter_trap(CoreState& n, uint32_t trap_cause, uint32_t epc, uint32_t tval) {
  ArchState& a = n.arch;
  uint32_t& mstatus = a.csr_ref(csr::kMstatus);
  a.csr_ref(csr::kMepc) = epc;
  a.csr_ref(csr::kMcause) = trap_cause;
  a.csr_ref(csr::kMtval) = tval;
  const bool mie = mstatus & csr::kMstatusMie;
  mstatus = (mstatus & ~(csr::kMstatusMie | csr::kMstatusMpie)) | (mie ? csr::kMstatusMpie : 0);
  a.pc = a.csr_value(csr::kMtvec) & ~3u;
  n.mem = {};
  n.busy = kTakenBranchCycles - 1;
}

uint32_t load_extract(uint8_t funct3, uint32_t addr, uint32_t word) {
  const unsigned shift = (addr & 3u) * 8;
  const uint32_t v = word >> shift;
  switch (funct3) {
    case 0: return static_cast<uint32_t>(static_cast<int32_t>(static_cast<int8_t>(v & 0xFF)));
    case 1: return static_cast<uint32_t>(static_cast<int32_t>(static_cast<int16_t>(v & 0xFFFF)));
    case 4: return v & 0xFF;
    case 5: return v & 0xFFFF;
    default: return word;
  }
}

uint32_t div_signed(uint32_t a, uint32_t b, bool remainder) {
  const auto sa = static_cast<int32_t>(a);
  const auto sb = static_cast<int32_t>(b);
  if (sb == 0) return remainder ? a : 0xFFFF'FFFFu;
  if (sa == std::numeric_limits<int32_t>::min() && sb == -1) return remainder ? 0 : a;
  return static_cast<uint32_t>(remainder ? sa % sb : sa / sb);
}

uint32_t div_unsigned(uint32_t a, uint32_t b, bool remainder) {
  if (b == 0) return remainder ? a : 0xFFFF'FFFFu;
  return remainder ? a % b : a / b;
}

// Executes the instruction at arch.pc. Returns false if it trapped.
bool execute(CoreState& n, const isa::DecodedInstr& d, const CoreInput& in, uint32_t hartid) {
  ArchState& a = n.arch;
  const uint32_t pc = a.pc;
  uint32_t next = pc + 4;
  bool taken = false;
  const uint32_t x1 = a.reg(d.rs1);
  const uint32_t x2 = a.reg(d.rs2);
  const auto imm = static_cast<uint32_t>(d.imm);
  const auto s1 = static_cast<int32_t>(x1);
  const auto s2 = static_cast<int32_t>(x2);

  auto jump = [&](uint32_t target) {
    next = target;
    taken = true;
  };

  switch (d.op) {
    case Op::Lui: a.set_reg(d.rd, imm); break;
    case Op::Auipc: a.set_reg(d.rd, pc + imm); break;
    case Op::Jal:
      a.set_reg(d.rd, pc + 4);
      jump(pc + imm);
      break;
    case Op::Jalr: {
      const uint32_t target = (x1 + imm) & ~1u;
      a.set_reg(d.rd, pc + 4);
      jump(target);
      break;
    }
    case Op::Beq: if (x1 == x2) jump(pc + imm); break;
    case Op::Bne: if (x1 != x2) jump(pc + imm); break;
    case Op::Blt: if (s1 < s2) jump(pc + imm); break;
    case Op::Bge: if (s1 >= s2) jump(pc + imm); break;
    case Op::Bltu: if (x1 < x2) jump(pc + imm); break;
    case Op::Bgeu: if (x1 >= x2) jump(pc + imm); break;

    case Op::Lb: case Op::Lh: case Op::Lw: case Op::Lbu: case Op::Lhu: {
      const uint32_t addr = x1 + imm;
      const uint8_t funct3 = static_cast<uint8_t>((d.raw >> 12) & 7);
      const uint32_t size = 1u << (funct3 & 3);
      if (addr & (size - 1)) {
        enter_trap(n, cause::kLoadMisaligned, pc, addr);
        return false;
      }
      n.mem = PendingAccess{true, false, funct3, d.rd, addr, 0, 0, pc};
      break;
    }
    case Op::Sb: case Op::Sh: case Op::Sw: {
      const uint32_t addr = x1 + imm;
      const uint8_t funct3 = static_cast<uint8_t>((d.raw >> 12) & 7);
      const uint32_t size = 1u << funct3;
      if (addr & (size - 1)) {
        enter_trap(n, cause::kStoreMisaligned, pc, addr);
        return false;
      }
      const unsigned off = addr & 3u;
      const uint8_t be = static_cast<uint8_t>(((1u << size) - 1) << off);
      const uint32_t data = size == 4 ? x2 : (x2 & ((1u << (size * 8)) - 1)) << (off * 8);
      n.mem = PendingAccess{true, true, funct3, 0, addr, data, be, pc};
      break;
    }

    case Op::Addi: a.set_reg(d.rd, x1 + imm); break;
    case Op::Slti: a.set_reg(d.rd, s1 < d.imm); break;
    case Op::Sltiu: a.set_reg(d.rd, x1 < imm); break;
    case Op::Xori: a.set_reg(d.rd, x1 ^ imm); break;
    case Op::Ori: a.set_reg(d.rd, x1 | imm); break;
    case Op::Andi: a.set_reg(d.rd, x1 & imm); break;
    case Op::Slli: a.set_reg(d.rd, x1 << (imm & 31)); break;
    case Op::Srli: a.set_reg(d.rd, x1 >> (imm & 31)); break;
    case Op::Srai: a.set_reg(d.rd, static_cast<uint32_t>(s1 >> (imm & 31))); break;
    case Op::Add: a.set_reg(d.rd, x1 + x2); break;
    case Op::Sub: a.set_reg(d.rd, x1 - x2); break;
    case Op::Sll: a.set_reg(d.rd, x1 << (x2 & 31)); break;
    case Op::Slt: a.set_reg(d.rd, s1 < s2); break;
    case Op::Sltu: a.set_reg(d.rd, x1 < x2); break;
    case Op::Xor: a.set_reg(d.rd, x1 ^ x2); break;
    case Op::Srl: a.set_reg(d.rd, x1 >> (x2 & 31)); break;
    case Op::Sra: a.set_reg(d.rd, static_cast<uint32_t>(s1 >> (x2 & 31))); break;
    case Op::Or: a.set_reg(d.rd, x1 | x2); break;
    case Op::And: a.set_reg(d.rd, x1 & x2); break;

    case Op::Mul: a.set_reg(d.rd, x1 * x2); break;
    case Op::Mulh:
      a.set_reg(d.rd, static_cast<uint32_t>((int64_t{s1} * int64_t{s2}) >> 32));
      break;
    case Op::Mulhsu:
      a.set_reg(d.rd, static_cast<uint32_t>((int64_t{s1} * static_cast<int64_t>(x2)) >> 32));
      break;
    case Op::Mulhu:
      a.set_reg(d.rd, static_cast<uint32_t>((uint64_t{x1} * uint64_t{x2}) >> 32));
      break;
    case Op::Div: case Op::Rem: case Op::Divu: case Op::Remu: {
      const bool rem = d.op == Op::Rem || d.op == Op::Remu;
      const bool sgn = d.op == Op::Div || d.op == Op::Rem;
      a.set_reg(d.rd, sgn ? div_signed(x1, x2, rem) : div_unsigned(x1, x2, rem));
      n.busy = kDivCycles - 1;
      break;
    }

    case Op::Fence: break;
    case Op::Ecall:
      enter_trap(n, cause::kEcallM, pc, 0);
      return false;
    case Op::Ebreak:
      enter_trap(n, cause::kBreakpoint, pc, pc);
      return false;
    case Op::Mret: {
      uint32_t& mstatus = a.csr_ref(csr::kMstatus);
      const bool mpie = mstatus & csr::kMstatusMpie;
      mstatus = (mstatus & ~csr::kMstatusMie) | (mpie ? csr::kMstatusMie : 0) | csr::kMstatusMpie;
      n.in_nmi = false;
      n.trap_return = true;
      jump(a.csr_value(csr::kMepc));
      break;
    }
    case Op::Wfi:
      if (!in.event_wake) n.sleeping = true;
      break;

    case Op::Csrrw: case Op::Csrrs: case Op::Csrrc:
    case Op::Csrrwi: case Op::Csrrsi: case Op::Csrrci: {
      const auto slot = csr_slot(d.csr);
      const bool imm_form = d.op >= Op::Csrrwi;
      const bool is_write = d.op == Op::Csrrw || d.op == Op::Csrrwi || d.rs1 != 0;
      if (!slot || (is_write && d.csr == csr::kMhartid)) {
        enter_trap(n, cause::kIllegalInstr, pc, d.raw);
        return false;
      }
      const uint32_t old = d.csr == csr::kMhartid ? hartid : a.csr[*slot];
      const uint32_t src = imm_form ? d.rs1 : x1;
      uint32_t value = old;
      if (d.op == Op::Csrrw || d.op == Op::Csrrwi) value = src;
      else if (d.op == Op::Csrrs || d.op == Op::Csrrsi) value = old | src;
      else value = old & ~src;
      if (is_write) a.csr[*slot] = value;
      a.set_reg(d.rd, old);
      break;
    }

    case Op::Illegal:
      enter_trap(n, cause::kIllegalInstr, pc, d.raw);
      return false;
  }

  if (next & 3u) {
    enter_trap(n, cause::kInstrMisaligned, pc, next);
    n.mem = {};
    return false;
  }
  a.pc = next;
  if (taken) n.busy = kTakenBranchCycles - 1;
  return true;
}

}  // namespace

StepResult step(const CoreState& state, const CoreInput& in) {
  StepResult r{state, {}, std::nullopt};
  CoreState& n = r.state;
  auto finish = [&r]() -> StepResult& {
    r.out = outputs(r.state);
    return r;
  };
  if (in.stall) return finish();

  ArchState& a = n.arch;
  n.trap_return = false;
  ++a.csr_ref(csr::kMcycle);

  if (n.mem.active) {
    const PendingAccess m = n.mem;
    n.mem = {};
    if (in.data_rsp.error) {
      enter_trap(n, m.write ? cause::kStoreAccessFault : cause::kLoadAccessFault, m.pc, m.addr);
      return finish();
    }
    if (!m.write) a.set_reg(m.rd, load_extract(m.funct3, m.addr, in.data_rsp.rdata));
  }

  if (in.irq.resync && !n.in_nmi) {
    a = take_irq(a, in.irq.cause);
    n.in_nmi = true;
    n.sleeping = false;
    n.busy = kTakenBranchCycles - 1;
    return finish();
  }
  if (n.sleeping) {
    if (in.event_wake) n.sleeping = false;
    return finish();
  }
  if (n.busy > 0) {
    --n.busy;
    return finish();
  }

  if (in.fetch_rsp.error) {
    enter_trap(n, cause::kInstrAccessFault, a.pc, a.pc);
    return finish();
  }
  const uint32_t pc = a.pc;
  const uint32_t hartid = in.hartid_override.value_or(a.csr_value(csr::kMhartid));
  if (execute(n, isa::decode(in.fetch_rsp.instr), in, hartid))
    r.retired = Retired{pc, in.fetch_rsp.instr};
  return finish();
}

}  // namespace odrg
