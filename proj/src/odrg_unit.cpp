#include "odrg/odrg_unit.hpp"

#include <limits>
#include <string>

#include "odrg/error.hpp"
#include "odrg/memory_map.hpp"

namespace odrg {

const char* to_string(Mode m) { return m == Mode::Tmr ? "tmr" : "performance"; }

const char* to_string(FsmState s) {
  switch (s) {
    case FsmState::Independent: return "Independent";
    case FsmState::TmrRun: return "TmrRun";
    case FsmState::TmrUnload: return "TmrUnload";
    case FsmState::TmrReload: return "TmrReload";
  }
  return "?";
}

std::array<bool, 3> vote3(std::span<const uint32_t> a, std::span<const uint32_t> b,
                          std::span<const uint32_t> c, std::span<uint32_t> voted) {
  std::array<bool, 3> mismatch{};
  for (std::size_t w = 0; w < voted.size(); ++w) {
    const WordVote v = vote3(a[w], b[w], c[w]);
    voted[w] = v.voted;
    for (int i = 0; i < 3; ++i) mismatch[i] = mismatch[i] || v.mismatch[i];
  }
  return mismatch;
}

VoteResult vote(const std::array<CoreInterface, 3>& outs) {
  VoteResult r;
  // Lockstep fast path: identical bundles vote to themselves.
  if (outs[0] == outs[1] && outs[1] == outs[2]) {
    r.voted = outs[0];
    return r;
  }
  const PackedInterface a = pack(outs[0]);
  const PackedInterface b = pack(outs[1]);
  const PackedInterface c = pack(outs[2]);
  PackedInterface v{};
  r.mismatch = vote3(a, b, c, v);
  r.voted = unpack(v);
  return r;
}

OdrgState reboot(OdrgState s) {
  s.latched_mode = s.mode_reg;
  s.fsm = s.latched_mode == Mode::Tmr ? FsmState::TmrRun : FsmState::Independent;
  s.mismatch_count = {};
  s.saved_sp = 0;
  s.pending_resync.reset();
  s.protocol_violations = 0;
  return s;
}

OdrgState fsm_step(OdrgState s, const FsmInputs& in) {
  if (s.latched_mode != Mode::Tmr) return s;

  // The voter and its detectors stay active in every Tmr sub-state.
  for (int i = 0; i < 3; ++i)
    if (in.mismatch[i] && s.mismatch_count[i] != std::numeric_limits<uint32_t>::max())
      ++s.mismatch_count[i];

  switch (s.fsm) {
    case FsmState::TmrRun: {
      const bool trigger = in.mismatch[0] || in.mismatch[1] || in.mismatch[2] || in.force;
      // Once armed, further mismatches do not restart the countdown.
      if (trigger && !s.pending_resync) s.pending_resync = s.resync_delay;
      if (s.pending_resync) {
        if (*s.pending_resync == 0) {
          s.pending_resync.reset();
          s.fsm = FsmState::TmrUnload;
        } else {
          --*s.pending_resync;
        }
      }
      break;
    }
    case FsmState::TmrUnload:
      if (in.sp_write) {
        s.saved_sp = *in.sp_write;
        s.fsm = FsmState::TmrReload;
      }
      break;
    case FsmState::TmrReload:
      if (in.reload_done) s.fsm = FsmState::TmrRun;
      break;
    case FsmState::Independent:
      break;
  }
  return s;
}

RegAccessResult reg_access(OdrgState& s, uint32_t offset, bool write, uint32_t wdata) {
  RegAccessResult r;
  switch (offset) {
    case map::kOdrgMode:
      if (write) s.mode_reg = (wdata & 1) ? Mode::Tmr : Mode::Performance;
      r.rdata = static_cast<uint32_t>(s.mode_reg);
      return r;
    case map::kOdrgResyncDelay:
      if (write) s.resync_delay = wdata;
      r.rdata = s.resync_delay;
      return r;
    case map::kOdrgSpStore:
      if (write) {
        if (s.fsm == FsmState::TmrUnload) r.sp_write = wdata;
        else if (s.fsm == FsmState::Independent) s.saved_sp = wdata;
        else ++s.protocol_violations;
      }
      r.rdata = s.saved_sp;
      return r;
    case map::kOdrgMismatch0:
    case map::kOdrgMismatch1:
    case map::kOdrgMismatch2: {
      const auto core = (offset - map::kOdrgMismatch0) / 4;
      if (write) s.mismatch_count[core] = 0;
      r.rdata = s.mismatch_count[core];
      return r;
    }
    case map::kOdrgStatus:
      r.rdata = static_cast<uint32_t>(s.fsm);
      return r;
    case map::kOdrgForceResync:
      if (write && (wdata & 1)) r.force = true;
      return r;
    default:
      throw BusError("unmapped ODRG register offset " + std::to_string(offset));
  }
}

std::array<CoreInput, 3> route_inputs(const OdrgState& s, const std::array<PortResponse, 3>& ports,
                                      uint32_t leader_hartid) {
  std::array<CoreInput, 3> ins{};
  auto to_input = [](const PortResponse& p) {
    CoreInput in;
    in.fetch_rsp.instr = p.instr;
    in.fetch_rsp.error = p.fetch_error;
    in.data_rsp.rdata = p.rdata;
    in.data_rsp.error = p.data_error;
    in.stall = p.stall;
    in.event_wake = p.event_wake;
    return in;
  };
  if (s.latched_mode == Mode::Performance) {
    for (int i = 0; i < 3; ++i) ins[i] = to_input(ports[i]);
    return ins;
  }
  CoreInput shared = to_input(ports[0]);
  shared.irq.resync = irq_asserted(s);
  shared.irq.cause = kResyncCause;
  shared.hartid_override = leader_hartid;
  ins.fill(shared);
  return ins;
}

OutputRouting route_outputs(const OdrgState& s, const std::array<CoreInterface, 3>& core_outs) {
  OutputRouting r;
  if (s.latched_mode == Mode::Performance) {
    r.ports = core_outs;
    return r;
  }
  const VoteResult v = vote(core_outs);
  r.ports[0] = v.voted;
  r.mismatch = v.mismatch;
  r.reload_done = v.voted.event_out.trap_return;
  return r;
}

RouteResult route(const OdrgState& s, const std::array<CoreInterface, 3>& core_outs,
                  const std::array<PortResponse, 3>& external_in, uint32_t leader_hartid) {
  const OutputRouting o = route_outputs(s, core_outs);
  return {o.ports, route_inputs(s, external_in, leader_hartid), o.mismatch, o.reload_done};
}

}  // namespace odrg
