#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>

#include "odrg/core.hpp"

namespace odrg {

enum class Mode : uint8_t { Performance = 0, Tmr = 1 };

// STATUS register encoding is the enumerator value.
enum class FsmState : uint8_t { Independent = 0, TmrRun = 1, TmrUnload = 2, TmrReload = 3 };

const char* to_string(Mode m);
const char* to_string(FsmState s);

// ---------------------------------------------------------------------------
// Bitwise majority voter

struct WordVote {
  uint32_t voted;
  std::array<bool, 3> mismatch;
};

// voted = ab | bc | ac per bit; mismatch[i] is set when input i differs from
// the voted word in any bit.
constexpr WordVote vote3(uint32_t a, uint32_t b, uint32_t c) {
  const uint32_t v = (a & b) | (b & c) | (a & c);
  return {v, {a != v, b != v, c != v}};
}

// Multi-word form: the voter is applied independently to every word.
std::array<bool, 3> vote3(std::span<const uint32_t> a, std::span<const uint32_t> b,
                          std::span<const uint32_t> c, std::span<uint32_t> voted);

struct VoteResult {
  CoreInterface voted;
  std::array<bool, 3> mismatch{};
};

VoteResult vote(const std::array<CoreInterface, 3>& outs);

// ---------------------------------------------------------------------------
// ODRG unit state

struct OdrgState {
  Mode mode_reg = Mode::Performance;      // MODE register; latched at reboot
  Mode latched_mode = Mode::Performance;  // mode in effect since the last reboot
  FsmState fsm = FsmState::Independent;
  std::array<uint32_t, 3> mismatch_count{};
  uint32_t resync_delay = 0;
  uint32_t saved_sp = 0;
  std::optional<uint32_t> pending_resync;  // countdown to the resync request
  uint32_t protocol_violations = 0;

  bool operator==(const OdrgState&) const = default;
};

// Latches MODE into the FSM. Counters and the pending countdown are cleared.
OdrgState reboot(OdrgState s);

// Resync interrupt line towards the three cores.
inline bool irq_asserted(const OdrgState& s) { return s.fsm == FsmState::TmrUnload; }

struct FsmInputs {
  std::array<bool, 3> mismatch{};
  std::optional<uint32_t> sp_write;  // voted store to SP_STORE this cycle
  bool force = false;                // FORCE_RESYNC written this cycle
  bool reload_done = false;          // voted trap return observed
};

OdrgState fsm_step(OdrgState s, const FsmInputs& in);

struct RegAccessResult {
  uint32_t rdata = 0;
  std::optional<uint32_t> sp_write;
  bool force = false;
};

// Memory-mapped register file. Throws BusError for unmapped offsets.
// SP_STORE and FORCE_RESYNC writes are reported back so the caller can feed
// them into fsm_step; writing SP_STORE outside TmrUnload counts a protocol
// violation and is otherwise ignored (in Performance mode it is a plain
// scratch register).
RegAccessResult reg_access(OdrgState& s, uint32_t offset, bool write, uint32_t wdata);

// ---------------------------------------------------------------------------
// Routing between the three cores and the group's three cluster ports

struct PortResponse {
  uint32_t instr = 0;
  bool fetch_error = false;
  uint32_t rdata = 0;
  bool data_error = false;
  bool stall = false;
  bool event_wake = false;

  bool operator==(const PortResponse&) const = default;
};

// Builds the three core inputs. In Tmr mode every core sees the leader
// port's response, the resync irq line and the leader's hart ID.
std::array<CoreInput, 3> route_inputs(const OdrgState& s, const std::array<PortResponse, 3>& ports,
                                      uint32_t leader_hartid);

struct OutputRouting {
  std::array<CoreInterface, 3> ports;
  std::array<bool, 3> mismatch{};
  bool reload_done = false;
};

// Performance: pass-through. Tmr: the voted interface drives port 0, the two
// spare ports stay idle.
OutputRouting route_outputs(const OdrgState& s, const std::array<CoreInterface, 3>& core_outs);

struct RouteResult {
  std::array<CoreInterface, 3> external_out;
  std::array<CoreInput, 3> core_ins;
  std::array<bool, 3> mismatch{};
  bool reload_done = false;
};

// Both directions in one call.
RouteResult route(const OdrgState& s, const std::array<CoreInterface, 3>& core_outs,
                  const std::array<PortResponse, 3>& external_in, uint32_t leader_hartid);

}  // namespace odrg
