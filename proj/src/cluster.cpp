#include "odrg/cluster.hpp"

#include <algorithm>
#include <bit>
#include <string>

#include <fmt/format.h>

#include "odrg/error.hpp"
#include "odrg/isa.hpp"

namespace odrg {

BankSlot bank_route(uint32_t addr) {
  if (!map::in_tcdm(addr))
    throw OutOfRange(fmt::format("address 0x{:08x} is outside the TCDM", addr));
  const uint32_t off = addr - map::kTcdmBase;
  return {static_cast<unsigned>((off >> 2) % kNumBanks), off >> 6};
}

ArbResult arbitrate(const BankRequests& requests, const RrPointers& rr) {
  ArbResult r;
  r.rr = rr;
  for (unsigned bank = 0; bank < kNumBanks; ++bank) {
    unsigned count = 0;
    for (const auto& q : requests) count += q && *q == bank;
    if (count == 0) continue;
    for (unsigned k = 0; k < kNumCores; ++k) {
      const unsigned port = (rr[bank] + k) % kNumCores;
      if (requests[port] && *requests[port] == bank) {
        r.grant[port] = true;
        if (count > 1) r.rr[bank] = static_cast<uint8_t>((port + 1) % kNumCores);
        break;
      }
    }
  }
  return r;
}

uint32_t Tcdm::load(uint32_t addr) const {
  const BankSlot b = bank_route(addr);
  return words[b.word_index * kNumBanks + b.bank];
}

void Tcdm::store(uint32_t addr, uint32_t data, uint8_t byte_enable) {
  const BankSlot b = bank_route(addr);
  uint32_t& w = words[b.word_index * kNumBanks + b.bank];
  uint32_t mask = 0;
  for (unsigned i = 0; i < 4; ++i)
    if (byte_enable & (1u << i)) mask |= 0xFFu << (8 * i);
  w = (w & ~mask) | (data & mask);
}

uint32_t logical_hartid(Mode mode, unsigned core) {
  return mode == Mode::Tmr ? core / kCoresPerGroup : core;
}

uint32_t logical_harts(Mode mode) { return mode == Mode::Tmr ? kNumGroups : kNumCores; }

namespace {

PortResponse fetch_response(const Imem& imem, const FetchReq& f) {
  PortResponse r;
  if (!f.valid) return r;
  if (!map::in_imem(f.addr) || (f.addr & 3)) r.fetch_error = true;
  else r.instr = imem.fetch(f.addr);
  return r;
}

}  // namespace

uint64_t reset_and_boot(ClusterState& s, Mode mode, const ProgramImage& image,
                        const BootOptions& opts) {
  const uint64_t image_bytes = uint64_t{image.words.size()} * 4;
  if (image.load_addr < map::kImemBase ||
      image.load_addr - map::kImemBase + image_bytes > map::kImemSize)
    throw ImageTooLarge(fmt::format("image of {} words at 0x{:08x} does not fit instruction memory",
                                    image.words.size(), image.load_addr));
  const uint32_t boot = opts.boot_addr.value_or(image.entry);
  if (!map::in_imem(boot)) throw OutOfRange(fmt::format("boot address 0x{:08x}", boot));

  ClusterState n;
  auto imem = std::make_shared<std::vector<uint32_t>>(map::kImemSize / 4, 0);
  std::copy(image.words.begin(), image.words.end(),
            imem->begin() + (image.load_addr - map::kImemBase) / 4);
  n.imem.words = std::move(imem);

  uint64_t cost = kRebootOverheadCycles + image.words.size();
  for (const auto& blk : image.data_init) {
    for (std::size_t i = 0; i < blk.words.size(); ++i)
      n.tcdm.store(blk.addr + static_cast<uint32_t>(4 * i), blk.words[i], 0xF);
    cost += blk.words.size();
  }

  // Host configuration writes: MODE and RESYNC_DELAY per unit, hart count,
  // barrier target, boot address.
  for (unsigned g = 0; g < kNumGroups; ++g) {
    reg_access(n.odrg[g], map::kOdrgMode, true, static_cast<uint32_t>(mode));
    reg_access(n.odrg[g], map::kOdrgResyncDelay, true, opts.resync_delay);
    cost += 2;
  }
  const uint32_t harts = std::min(image.max_harts, logical_harts(mode));
  n.ctrl.nharts = harts;
  n.event_unit.barrier_target = harts;
  n.ctrl.boot_addr = boot;
  cost += 3;

  for (auto& o : n.odrg) o = reboot(o);
  for (unsigned c = 0; c < kNumCores; ++c) {
    n.cores[c] = reset_core(boot, logical_hartid(mode, c));
    n.fetch_enable[c] = true;
    // The first fetch is served while the cluster leaves reset.
    n.port_rsp[c] = fetch_response(n.imem, outputs(n.cores[c]).fetch_req);
  }
  s = std::move(n);
  return cost;
}

uint32_t periph_access(ClusterState& s, unsigned port, uint32_t addr, bool write, uint32_t wdata,
                       PeriphEffects& fx) {
  if (!map::in_periph(addr)) throw BusError(fmt::format("0x{:08x} is not a peripheral", addr));
  const uint32_t a = addr & ~3u;

  if (a >= map::kOdrgBase && a < map::kOdrgBase + kNumGroups * map::kOdrgStride) {
    const unsigned g = (a - map::kOdrgBase) / map::kOdrgStride;
    const RegAccessResult r =
        reg_access(s.odrg[g], (a - map::kOdrgBase) % map::kOdrgStride, write, wdata);
    if (r.sp_write) fx.sp_write[g] = r.sp_write;
    fx.force[g] = fx.force[g] || r.force;
    return r.rdata;
  }
  if (a == map::kExitReg) {
    if (write && !s.exit_code) s.exit_code = wdata;
    return 0;
  }
  switch (a) {
    case map::kEventUnitBase + map::kEuBarrierTarget:
      if (write) s.event_unit.barrier_target = wdata;
      return s.event_unit.barrier_target;
    case map::kEventUnitBase + map::kEuWake:
      if (write) s.event_unit.wake_pending |= static_cast<uint8_t>(wdata & 0x3F);
      return 0;
    case map::kClusterCtrlBase + map::kCcNumHarts: return s.ctrl.nharts;
    case map::kClusterCtrlBase + map::kCcGroupId: return port / kCoresPerGroup;
    case map::kClusterCtrlBase + map::kCcBootAddr: return s.ctrl.boot_addr;
    case map::kClusterCtrlBase + map::kCcCycleLo: return static_cast<uint32_t>(s.cycle);
    case map::kClusterCtrlBase + map::kCcCycleHi: return static_cast<uint32_t>(s.cycle >> 32);
    default: break;
  }
  throw BusError(fmt::format("unmapped peripheral address 0x{:08x}", addr));
}

namespace {

struct MemoryPhase {
  std::array<PortResponse, kNumCores> rsp{};
  PeriphEffects fx;
};

MemoryPhase memory_phase(ClusterState& s, const std::array<CoreInterface, kNumCores>& ports) {
  MemoryPhase m;
  for (unsigned p = 0; p < kNumCores; ++p) m.rsp[p] = fetch_response(s.imem, ports[p].fetch_req);

  BankRequests banks{};
  for (unsigned p = 0; p < kNumCores; ++p) {
    const DataReq& d = ports[p].data_req;
    if (d.valid && map::in_tcdm(d.addr)) banks[p] = bank_route(d.addr).bank;
  }
  const ArbResult arb = arbitrate(banks, s.tcdm.rr);
  s.tcdm.rr = arb.rr;

  uint8_t barrier_now = 0;
  for (unsigned p = 0; p < kNumCores; ++p) {
    const DataReq& d = ports[p].data_req;
    PortResponse& r = m.rsp[p];
    if (!d.valid) continue;
    if (banks[p]) {
      if (!arb.grant[p]) r.stall = true;
      else if (d.write) s.tcdm.store(d.addr, d.wdata, d.byte_enable);
      else r.rdata = s.tcdm.load(d.addr);
    } else if ((d.addr & ~3u) == map::kEuBarrierAddr && !d.write) {
      barrier_now |= static_cast<uint8_t>(1u << p);
    } else if (map::in_periph(d.addr)) {
      try {
        r.rdata = periph_access(s, p, d.addr, d.write, d.wdata, m.fx);
      } catch (const BusError&) {
        r.data_error = true;
      }
    } else if (map::in_imem(d.addr) && !d.write) {
      r.rdata = s.imem.fetch(d.addr & ~3u);
    } else {
      r.data_error = true;
    }
  }

  if (barrier_now) {
    EventUnit& eu = s.event_unit;
    eu.arrived |= barrier_now;
    if (static_cast<unsigned>(std::popcount(eu.arrived)) >= eu.barrier_target) {
      eu.arrived = 0;
    } else {
      for (unsigned p = 0; p < kNumCores; ++p)
        if (barrier_now & (1u << p)) m.rsp[p].stall = true;
    }
  }

  for (unsigned p = 0; p < kNumCores; ++p)
    m.rsp[p].event_wake = (s.event_unit.wake_pending >> p) & 1;
  s.event_unit.wake_pending = 0;
  return m;
}

}  // namespace

CycleReport cluster_cycle(ClusterState& s, const InterfaceFault* fault) {
  CycleReport rep;
  rep.cycle = s.cycle;
  if (s.halted()) return rep;

  // 1. Input routing from the responses latched last cycle.
  std::array<CoreInput, kNumCores> ins{};
  for (unsigned g = 0; g < kNumGroups; ++g) {
    const unsigned base = g * kCoresPerGroup;
    const std::array<PortResponse, 3> ext = {s.port_rsp[base], s.port_rsp[base + 1],
                                             s.port_rsp[base + 2]};
    const auto gi = route_inputs(s.odrg[g], ext, logical_hartid(s.mode(), base));
    std::copy(gi.begin(), gi.end(), ins.begin() + base);
    rep.fsm_before[g] = s.odrg[g].fsm;
  }

  // 2. Core steps. A Tmr group in lockstep shares one evaluation.
  std::array<CoreInterface, kNumCores> outs{};
  for (unsigned g = 0; g < kNumGroups; ++g) {
    const unsigned base = g * kCoresPerGroup;
    const bool shared = s.odrg[g].latched_mode == Mode::Tmr && s.cores[base] == s.cores[base + 1] &&
                        s.cores[base] == s.cores[base + 2] && s.fetch_enable[base] &&
                        s.fetch_enable[base + 1] && s.fetch_enable[base + 2];
    if (shared) {
      StepResult r = step(s.cores[base], ins[base]);
      for (unsigned c = base; c < base + kCoresPerGroup; ++c) {
        s.cores[c] = r.state;
        outs[c] = r.out;
        rep.retired[c] = r.retired;
      }
      continue;
    }
    for (unsigned c = base; c < base + kCoresPerGroup; ++c) {
      if (!s.fetch_enable[c]) continue;
      StepResult r = step(s.cores[c], ins[c]);
      s.cores[c] = r.state;
      outs[c] = r.out;
      rep.retired[c] = r.retired;
    }
  }

  // 3. Single-cycle upset on one core's outputs, ahead of the voter.
  if (fault) {
    if (fault->core >= kNumCores) throw InvalidFault("core index out of range");
    outs[fault->core] = flip_interface_bit(outs[fault->core], fault->signal, fault->bit);
  }
  rep.core_out = outs;

  // 4. Output routing / voting.
  std::array<CoreInterface, kNumCores> ports{};
  std::array<bool, kNumGroups> reload_done{};
  for (unsigned g = 0; g < kNumGroups; ++g) {
    const unsigned base = g * kCoresPerGroup;
    const OutputRouting o =
        route_outputs(s.odrg[g], {outs[base], outs[base + 1], outs[base + 2]});
    std::copy(o.ports.begin(), o.ports.end(), ports.begin() + base);
    rep.mismatch[g] = o.mismatch;
    reload_done[g] = o.reload_done;
  }

  // 5. Memory, peripherals and barrier.
  MemoryPhase m = memory_phase(s, ports);
  s.port_rsp = m.rsp;

  // 6. ODRG state machines.
  for (unsigned g = 0; g < kNumGroups; ++g) {
    FsmInputs fi;
    fi.mismatch = rep.mismatch[g];
    fi.sp_write = m.fx.sp_write[g];
    fi.force = m.fx.force[g];
    fi.reload_done = reload_done[g];
    s.odrg[g] = fsm_step(s.odrg[g], fi);
    rep.fsm_after[g] = s.odrg[g].fsm;
  }

  ++s.cycle;
  return rep;
}

ClusterState cluster_cycle(ClusterState s) {
  cluster_cycle(s, nullptr);
  return s;
}

// ---------------------------------------------------------------------------

uint64_t Cluster::boot(Mode mode, const ProgramImage& image, const BootOptions& opts) {
  episodes_.clear();
  open_ = {};
  divergent_cycles_ = 0;
  retired_ = {};
  iface_fault_.reset();
  return reset_and_boot(state_, mode, image, opts);
}

CycleReport Cluster::step() {
  const InterfaceFault* fault = nullptr;
  if (iface_fault_ && iface_fault_->first == state_.cycle) fault = &iface_fault_->second;
  CycleReport rep = cluster_cycle(state_, fault);

  for (unsigned c = 0; c < kNumCores; ++c) {
    if (!rep.retired[c]) continue;
    ++retired_[c];
    if (trace_) trace_(rep.cycle, c, *rep.retired[c]);
  }

  for (unsigned g = 0; g < kNumGroups; ++g) {
    if (state_.odrg[g].latched_mode != Mode::Tmr) continue;
    const unsigned base = g * kCoresPerGroup;
    if (!(rep.core_out[base] == rep.core_out[base + 1] &&
          rep.core_out[base] == rep.core_out[base + 2]))
      ++divergent_cycles_;

    const unsigned other = (1 - g) * kCoresPerGroup;
    if (open_[g]) {
      for (unsigned c = other; c < other + kCoresPerGroup; ++c)
        if (rep.retired[c]) {
          ++open_[g]->other_group_retired;
          break;
        }
    }
    if (rep.fsm_before[g] != FsmState::TmrUnload && rep.fsm_after[g] == FsmState::TmrUnload) {
      ResyncEpisode e;
      e.group = g;
      e.start = rep.cycle + 1;
      open_[g] = e;
    }
    if (open_[g] && rep.fsm_before[g] == FsmState::TmrReload &&
        rep.fsm_after[g] == FsmState::TmrRun) {
      ResyncEpisode e = *open_[g];
      e.end = rep.cycle + 1;
      const auto& cs = state_.cores;
      e.snapshots_equal = cs[base].arch == cs[base + 1].arch && cs[base].arch == cs[base + 2].arch;
      episodes_.push_back(e);
      open_[g].reset();
    }
  }
  return rep;
}

RunResult Cluster::run(uint64_t max_cycles) {
  while (!state_.halted() && state_.cycle < max_cycles) step();
  RunResult r;
  r.exit_code = state_.exit_code;
  r.cycles = state_.cycle;
  r.timed_out = !state_.halted();
  return r;
}

std::string format_trace_line(uint64_t cycle, unsigned core, const Retired& r) {
  return fmt::format("{},{},0x{:08x},0x{:08x},{}", cycle, core, r.pc, r.instr,
                     isa::disassemble(r.instr));
}

}  // namespace odrg
