#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "odrg/core.hpp"
#include "odrg/memory_map.hpp"
#include "odrg/odrg_unit.hpp"
#include "odrg/program.hpp"

namespace odrg {

inline constexpr std::size_t kNumCores = 6;
inline constexpr std::size_t kNumGroups = 2;
inline constexpr std::size_t kCoresPerGroup = 3;
inline constexpr std::size_t kNumBanks = 16;
inline constexpr std::size_t kTcdmWords = map::kTcdmSize / 4;
inline constexpr std::size_t kWordsPerBank = kTcdmWords / kNumBanks;

// Fixed controller overhead of a reboot; image and data copies add one cycle
// per word and every host configuration write one cycle.
inline constexpr uint64_t kRebootOverheadCycles = 1000;

// ---------------------------------------------------------------------------
// TCDM and interconnect

struct BankSlot {
  unsigned bank;
  uint32_t word_index;
  bool operator==(const BankSlot&) const = default;
};

// Throws OutOfRange for addresses outside the TCDM.
BankSlot bank_route(uint32_t addr);

using RrPointers = std::array<uint8_t, kNumBanks>;
using BankRequests = std::array<std::optional<unsigned>, kNumCores>;

struct ArbResult {
  std::array<bool, kNumCores> grant{};
  RrPointers rr{};
};

// Per bank, grants the first requesting port at or after the bank's pointer
// (cyclically). The pointer moves to granted+1 only when the grant was
// contended.
ArbResult arbitrate(const BankRequests& requests, const RrPointers& rr);

struct Tcdm {
  // Flat word array; word w lives in bank w % 16 at index w / 16.
  std::vector<uint32_t> words = std::vector<uint32_t>(kTcdmWords, 0);
  RrPointers rr{};

  uint32_t load(uint32_t addr) const;
  void store(uint32_t addr, uint32_t data, uint8_t byte_enable);
  uint32_t bank_word(unsigned bank, uint32_t index) const { return words[index * kNumBanks + bank]; }

  bool operator==(const Tcdm&) const = default;
};

// ---------------------------------------------------------------------------
// Event unit and cluster control

struct EventUnit {
  uint32_t barrier_target = 0;
  uint8_t arrived = 0;       // ports waiting on the barrier
  uint8_t wake_pending = 0;  // delivered as event_wake with the next response
  bool operator==(const EventUnit&) const = default;
};

struct ClusterCtrl {
  uint32_t nharts = 0;
  uint32_t boot_addr = 0;
  bool operator==(const ClusterCtrl&) const = default;
};

// Read-only instruction memory shared by copies of a cluster state.
struct Imem {
  std::shared_ptr<const std::vector<uint32_t>> words;

  uint32_t fetch(uint32_t addr) const { return (*words)[(addr - map::kImemBase) >> 2]; }
  bool operator==(const Imem& o) const {
    return words == o.words || (words && o.words && *words == *o.words);
  }
};

// Complete simulated state. A plain value: copying it forks the simulation.
struct ClusterState {
  std::array<CoreState, kNumCores> cores{};
  std::array<bool, kNumCores> fetch_enable{};
  std::array<OdrgState, kNumGroups> odrg{};
  Tcdm tcdm;
  Imem imem;
  EventUnit event_unit;
  ClusterCtrl ctrl;
  std::array<PortResponse, kNumCores> port_rsp{};  // latched for the next cycle
  uint64_t cycle = 0;
  std::optional<uint32_t> exit_code;

  bool halted() const { return exit_code.has_value(); }
  Mode mode() const { return odrg[0].latched_mode; }
  bool operator==(const ClusterState&) const = default;
};

// Logical hart ID seen by physical core `core`.
uint32_t logical_hartid(Mode mode, unsigned core);
uint32_t logical_harts(Mode mode);

struct BootOptions {
  std::optional<uint32_t> boot_addr;  // defaults to the image entry
  uint32_t resync_delay = 0;
};

// Host reboot sequence: writes MODE and RESYNC_DELAY into both ODRG units,
// copies the image and its data, programs the active hart count and barrier
// target, latches the mode and releases the cores. Returns the modeled
// cycle cost of the sequence. Throws ImageTooLarge.
uint64_t reset_and_boot(ClusterState& s, Mode mode, const ProgramImage& image,
                        const BootOptions& opts = {});

// Single-cycle peripheral access on behalf of `port`. Throws BusError for
// unmapped addresses. The barrier register is handled by the cycle loop.
struct PeriphEffects {
  std::array<std::optional<uint32_t>, kNumGroups> sp_write;
  std::array<bool, kNumGroups> force{};
};
uint32_t periph_access(ClusterState& s, unsigned port, uint32_t addr, bool write, uint32_t wdata,
                       PeriphEffects& fx);

// ---------------------------------------------------------------------------
// Cycle loop

struct InterfaceFault {
  unsigned core = 0;
  Signal signal = Signal::FetchAddr;
  unsigned bit = 0;
};

struct CycleReport {
  uint64_t cycle = 0;  // index of the simulated cycle
  std::array<std::optional<Retired>, kNumCores> retired;
  std::array<CoreInterface, kNumCores> core_out;  // after fault injection, before voting
  std::array<std::array<bool, 3>, kNumGroups> mismatch{};
  std::array<FsmState, kNumGroups> fsm_before{};
  std::array<FsmState, kNumGroups> fsm_after{};
};

// Advances `s` by one cycle. Does nothing once halted.
CycleReport cluster_cycle(ClusterState& s, const InterfaceFault* fault = nullptr);

// Value form.
ClusterState cluster_cycle(ClusterState s);

// ---------------------------------------------------------------------------
// Runner with observation hooks

struct ResyncEpisode {
  unsigned group = 0;
  uint64_t start = 0;  // first cycle with the resync irq asserted
  uint64_t end = 0;    // first cycle back in TmrRun
  uint64_t other_group_retired = 0;
  bool snapshots_equal = false;  // group's cores pairwise equal at the end

  uint64_t cycles() const { return end - start; }
};

struct RunResult {
  std::optional<uint32_t> exit_code;
  uint64_t cycles = 0;
  bool timed_out = false;
};

class Cluster {
 public:
  using TraceSink = std::function<void(uint64_t cycle, unsigned core, const Retired&)>;

  Cluster() = default;
  explicit Cluster(ClusterState s) : state_(std::move(s)) {}

  uint64_t boot(Mode mode, const ProgramImage& image, const BootOptions& opts = {});

  ClusterState& state() { return state_; }
  const ClusterState& state() const { return state_; }

  void set_trace(TraceSink sink) { trace_ = std::move(sink); }
  void inject_interface_fault(uint64_t cycle, InterfaceFault f) { iface_fault_ = {cycle, f}; }

  CycleReport step();
  // Runs until the exit register is written or the cluster cycle counter
  // reaches `max_cycles`.
  RunResult run(uint64_t max_cycles);

  const std::vector<ResyncEpisode>& episodes() const { return episodes_; }
  // Cycles in which the three cores of a Tmr group drove different interfaces.
  uint64_t divergent_cycles() const { return divergent_cycles_; }
  std::array<uint64_t, kNumCores> retired() const { return retired_; }

 private:
  ClusterState state_;
  TraceSink trace_;
  std::optional<std::pair<uint64_t, InterfaceFault>> iface_fault_;
  std::vector<ResyncEpisode> episodes_;
  std::array<std::optional<ResyncEpisode>, kNumGroups> open_{};
  uint64_t divergent_cycles_ = 0;
  std::array<uint64_t, kNumCores> retired_{};
};

// "cycle,coreid,0xpc,0xinstr,disasm"
std::string format_trace_line(uint64_t cycle, unsigned core, const Retired& r);

}  // namespace odrg
