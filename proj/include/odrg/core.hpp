#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>

namespace odrg {

// Machine-mode CSR numbers modeled by the core.
namespace csr {
inline constexpr uint16_t kMstatus = 0x300;
inline constexpr uint16_t kMie = 0x304;
inline constexpr uint16_t kMtvec = 0x305;
inline constexpr uint16_t kMscratch = 0x340;
inline constexpr uint16_t kMepc = 0x341;
inline constexpr uint16_t kMcause = 0x342;
inline constexpr uint16_t kMtval = 0x343;
inline constexpr uint16_t kMip = 0x344;
inline constexpr uint16_t kMcycle = 0xB00;
inline constexpr uint16_t kMhartid = 0xF14;

inline constexpr uint32_t kMstatusMie = 1u << 3;
inline constexpr uint32_t kMstatusMpie = 1u << 7;
inline constexpr uint32_t kMstatusMpp = 3u << 11;
}  // namespace csr

// The CSR part of the resynchronization save set, in frame order. Together
// with x1..x31 this is the complete architectural state: 41 words.
inline constexpr std::array<uint16_t, 10> kSavedCsrs = {
    csr::kMstatus, csr::kMtvec, csr::kMepc,    csr::kMcause, csr::kMtval,
    csr::kMscratch, csr::kMie,  csr::kMip,     csr::kMhartid, csr::kMcycle,
};
inline constexpr std::size_t kNumGprs = 31;
inline constexpr std::size_t kSaveSetWords = kNumGprs + kSavedCsrs.size();
static_assert(kSaveSetWords == 41);

// Interrupt cause used by the ODRG resynchronization request. It is taken
// regardless of mstatus.MIE.
inline constexpr uint8_t kResyncCause = 30;
inline constexpr uint32_t kInterruptBit = 0x8000'0000u;

// Exception causes.
namespace cause {
inline constexpr uint32_t kInstrMisaligned = 0;
inline constexpr uint32_t kInstrAccessFault = 1;
inline constexpr uint32_t kIllegalInstr = 2;
inline constexpr uint32_t kBreakpoint = 3;
inline constexpr uint32_t kLoadMisaligned = 4;
inline constexpr uint32_t kLoadAccessFault = 5;
inline constexpr uint32_t kStoreMisaligned = 6;
inline constexpr uint32_t kStoreAccessFault = 7;
inline constexpr uint32_t kEcallM = 11;
}  // namespace cause

// Timing model.
inline constexpr uint32_t kDivCycles = 37;
inline constexpr uint32_t kTakenBranchCycles = 2;

// mstatus after reset: MPP=M and MPIE=1, so that a trap entry followed by
// mret restores it bit-exactly.
inline constexpr uint32_t kResetMstatus = csr::kMstatusMpp | csr::kMstatusMpie;

std::optional<std::size_t> csr_slot(uint16_t number);

struct ArchState {
  std::array<uint32_t, kNumGprs> gpr{};  // x1..x31
  uint32_t pc = 0;
  std::array<uint32_t, kSavedCsrs.size()> csr{};  // indexed like kSavedCsrs

  uint32_t reg(unsigned index) const { return index == 0 ? 0 : gpr[index - 1]; }
  void set_reg(unsigned index, uint32_t value) {
    if (index != 0) gpr[index - 1] = value;
  }
  uint32_t& csr_ref(uint16_t number);
  uint32_t csr_value(uint16_t number) const;

  bool operator==(const ArchState&) const = default;
};

// Flat word image of an ArchState: x1..x31, pc, then the CSRs.
using ArchSnapshot = std::array<uint32_t, kNumGprs + 1 + kSavedCsrs.size()>;

ArchSnapshot snapshot(const ArchState& s);
ArchState restore(const ArchSnapshot& snap);

struct GprTarget {
  unsigned index;  // 0..31; flipping x0 is a no-op
  bool operator==(const GprTarget&) const = default;
};
struct PcTarget {
  bool operator==(const PcTarget&) const = default;
};
struct CsrTarget {
  uint16_t number;
  bool operator==(const CsrTarget&) const = default;
};
using RegisterTarget = std::variant<GprTarget, PcTarget, CsrTarget>;

// Inverts exactly one bit. Throws UnknownTarget for registers outside the
// modeled set and for bit > 31.
ArchState flip_bit(ArchState state, const RegisterTarget& target, unsigned bit);

// Trap entry for interrupt `cause` (direct-mode mtvec).
ArchState take_irq(ArchState state, uint8_t cause);

// ---------------------------------------------------------------------------
// Per-cycle interface

struct FetchReq {
  bool valid = false;
  uint32_t addr = 0;
  bool operator==(const FetchReq&) const = default;
};

struct DataReq {
  bool valid = false;
  uint32_t addr = 0;
  bool write = false;
  uint8_t byte_enable = 0;  // nonzero iff valid && write
  uint32_t wdata = 0;
  bool operator==(const DataReq&) const = default;
};

struct EventOut {
  bool barrier_hit = false;  // waiting on the event-unit barrier
  bool trap_return = false;  // mret executed in the previous step
  bool operator==(const EventOut&) const = default;
};

struct CoreInterface {
  FetchReq fetch_req;
  DataReq data_req;
  EventOut event_out;
  bool sleeping = false;
  bool operator==(const CoreInterface&) const = default;
};

// Interface fields as voted signals.
enum class Signal : uint8_t {
  FetchValid,
  FetchAddr,
  DataValid,
  DataAddr,
  DataWrite,
  DataByteEnable,
  DataWdata,
  BarrierHit,
  TrapReturn,
  Sleeping,
};
inline constexpr std::size_t kNumSignals = 10;

unsigned signal_width(Signal s);
const char* signal_name(Signal s);
std::optional<Signal> signal_from_name(std::string_view name);

// Bit-vector view of a CoreInterface used by the voter.
using PackedInterface = std::array<uint32_t, 4>;
PackedInterface pack(const CoreInterface& i);
CoreInterface unpack(const PackedInterface& p);

// Throws UnknownTarget if bit >= signal_width(s).
CoreInterface flip_interface_bit(CoreInterface i, Signal s, unsigned bit);

struct CoreInput {
  struct {
    uint32_t instr = 0;
    bool error = false;
  } fetch_rsp;
  struct {
    uint32_t rdata = 0;
    bool error = false;
  } data_rsp;
  bool stall = false;
  struct {
    bool resync = false;
    uint8_t cause = kResyncCause;
  } irq;
  bool event_wake = false;
  std::optional<uint32_t> hartid_override;
};

// ---------------------------------------------------------------------------
// Core model

// Outstanding data access issued by the previous step.
struct PendingAccess {
  bool active = false;
  bool write = false;
  uint8_t funct3 = 0;
  uint8_t rd = 0;
  uint32_t addr = 0;
  uint32_t wdata = 0;
  uint8_t byte_enable = 0;
  uint32_t pc = 0;
  bool operator==(const PendingAccess&) const = default;
};

struct CoreState {
  ArchState arch;
  PendingAccess mem;
  uint32_t busy = 0;  // bubble cycles left before the next fetch
  bool sleeping = false;
  bool in_nmi = false;  // inside the resync handler; cleared by mret
  bool trap_return = false;
  bool operator==(const CoreState&) const = default;
};

CoreState reset_core(uint32_t boot_addr, uint32_t hartid);

// Interface driven by a core in state `s`.
CoreInterface outputs(const CoreState& s);

struct Retired {
  uint32_t pc;
  uint32_t instr;
};

struct StepResult {
  CoreState state;
  CoreInterface out;
  std::optional<Retired> retired;
};

// One clock cycle. Pure: the result depends only on (state, input).
StepResult step(const CoreState& state, const CoreInput& input);

}  // namespace odrg
