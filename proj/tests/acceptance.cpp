// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "odrg/campaign.hpp"
#include "odrg/cluster.hpp"
#include "odrg/firmware.hpp"
#include "odrg/isa.hpp"

using namespace odrg;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
    }
  }
  void note(const std::string& s) { detail += (detail.empty() ? "" : "; ") + s; }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Verdict speedup() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  double sp[3] = {};
  for (std::size_t i = 0; i < kAllKernels.size(); ++i) {
    const BenchRow row = bench_kernel(kAllKernels[i], 1);
    sp[i] = row.speedup();
    v.note(fmt::format("{} {:.2f}x", kernel_name(row.kernel), sp[i]));
    v.require(row.passed, fmt::format("{} self-check", kernel_name(row.kernel)));
    v.require(sp[i] >= 2.3 && sp[i] <= 3.0, fmt::format("{} speedup in [2.3, 3.0]", kernel_name(row.kernel)));
  }
  v.require(sp[1] >= sp[2], "matmul24 >= matmul32");
  const double secs = seconds_since(t0);
  v.note(fmt::format("{:.1f} s", secs));
  v.require(secs < 60, "runtime < 60 s");
  return v;
}

Verdict resync_latency() {
  Verdict v;
  const GoldenRef g = golden_run(gen_kernel({KernelKind::MatMul24, kMaxHarts, 1}), Mode::Tmr);
  std::vector<uint64_t> times;
  const unsigned n = 50;
  for (unsigned i = 0; i < n; ++i) times.push_back(g.total_cycles * (i + 1) / (n + 1));
  const ResyncStats s = measure_resync(g, times);
  bool snaps = true;
  for (const auto& x : s.samples) snaps = snaps && x.snapshots_equal;
  v.note(fmt::format("{} injections, resync cycles min {} max {} mean {:.1f}", s.samples.size(), s.min, s.max,
                     s.mean));
  v.require(s.samples.size() >= 50, ">= 50 injections");
  v.require(s.all_detected_corrected, "all DetectedCorrected");
  v.require(s.min >= 300 && s.max <= 1400, "resync cycles in [300, 1400]");
  v.require(s.max - s.min <= 100, "spread <= 100");
  v.require(s.other_group_progressed, "other group progresses during resync");
  v.require(snaps, "post-resync snapshots equal");
  return v;
}

Verdict tmr_safety() {
  Verdict v;
  for (KernelKind k : kAllKernels) {
    CampaignConfig cfg;
    cfg.kernel = k;
    cfg.mode = Mode::Tmr;
    cfg.faults = RandomFaults{1000, 2024, {TargetClass::Gpr, TargetClass::Csr, TargetClass::Interface}};
    const CampaignReport r = campaign(cfg);
    const uint64_t sdc = r.count(OutcomeClass::SilentDataCorruption), hang = r.count(OutcomeClass::Hang);
    const uint64_t ok = r.count(OutcomeClass::Masked) + r.count(OutcomeClass::DetectedCorrected);
    v.note(fmt::format("{}: {} runs, masked {}, corrected {}, sdc {}, hang {}", kernel_name(k), r.runs.size(),
                       r.count(OutcomeClass::Masked), r.count(OutcomeClass::DetectedCorrected), sdc, hang));
    v.require(r.runs.size() >= 1000, "1000 runs");
    v.require(sdc == 0 && hang == 0, fmt::format("{} no SDC/Hang", kernel_name(k)));
    v.require(ok == r.runs.size(), "every run Masked or DetectedCorrected");
    v.require(r.snapshots_equal, "post-resync snapshots equal");
  }
  return v;
}

Verdict voter() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  uint64_t bad = 0;
  for (uint32_t x = 0; x < (1u << 24); ++x) {
    const uint32_t a = x & 0xFF, b = (x >> 8) & 0xFF, c = x >> 16;
    uint32_t maj = 0;
    for (unsigned bit = 0; bit < 8; ++bit)
      if (((a >> bit) & 1) + ((b >> bit) & 1) + ((c >> bit) & 1) >= 2) maj |= 1u << bit;
    const WordVote w = vote3(a, b, c);
    if (w.voted != maj || w.mismatch[0] != (a != maj) || w.mismatch[1] != (b != maj) ||
        w.mismatch[2] != (c != maj))
      ++bad;
  }
  const double secs = seconds_since(t0);
  v.note(fmt::format("{} discrepancies in 2^24 triples, {:.1f} s", bad, secs));
  v.require(bad == 0, "zero discrepancies");
  v.require(secs < 30, "runtime < 30 s");
  return v;
}

Verdict reboot_cost() {
  Verdict v;
  for (KernelKind k : kAllKernels) {
    const ProgramImage img = gen_kernel({k, kMaxHarts, 1});
    for (Mode m : {Mode::Tmr, Mode::Performance}) {
      ClusterState s;
      const uint64_t c = reset_and_boot(s, m, img);
      v.note(fmt::format("{}/{} {}", kernel_name(k), to_string(m), c));
      v.require(c < 40000, "< 40000 cycles");
    }
  }
  return v;
}

Verdict save_set() {
  Verdict v;
  const ProgramImage img = build_program("main: j __park\n");
  unsigned stores = 0, loads = 0;
  std::set<int32_t> store_slots, load_slots;
  for (uint32_t a = img.symbols.at("__resync_handler");; a += 4) {
    const isa::DecodedInstr d = isa::decode(img.words[(a - img.load_addr) / 4]);
    if (d.op == isa::Op::Sw && d.rs1 == 2) {
      ++stores;
      store_slots.insert(d.imm);
    }
    if (d.op == isa::Op::Lw && d.rs1 == 2) {
      ++loads;
      load_slots.insert(d.imm);
    }
    if (d.op == isa::Op::Mret) break;
  }
  v.note(fmt::format("{} frame stores, {} frame loads", stores, loads));
  v.require(stores == 41 && loads == 41, "41 stores and 41 loads");
  v.require(store_slots.size() == 41 && load_slots.size() == 41, "41 distinct slots");

  // FORCE_RESYNC without divergence.
  std::string body = "main:\n  bnez a0, __park\n";
  for (unsigned r = 5; r < 32; ++r)
    if (r != 10 && r != 11) body += fmt::format("  li x{}, {}\n", r, r * 1000 + 7);
  body += "  li t0, 0x1020001C\n  li t1, 1\n  sw t1, 0(t0)\n";
  for (int i = 0; i < 400; ++i) body += "  nop\n";
  body += "  li t1, 0x10200FF0\n  sw zero, 0(t1)\n  j __park\n";
  Cluster c;
  c.boot(Mode::Tmr, build_program(body));
  std::optional<ArchState> before, after;
  while (!c.state().halted() && c.state().cycle < 100000) {
    const CycleReport r = c.step();
    if (!before && r.fsm_after[0] == FsmState::TmrUnload) before = c.state().cores[0].arch;
    if (before && !after && r.fsm_before[0] == FsmState::TmrReload && r.fsm_after[0] == FsmState::TmrRun)
      after = c.state().cores[0].arch;
  }
  bool noop = before && after && c.state().exit_code == 0u;
  if (noop) {
    ArchState a = *before, b = *after;
    for (uint16_t x : {csr::kMepc, csr::kMcause, csr::kMcycle}) a.csr_ref(x) = b.csr_ref(x) = 0;
    noop = a == b;
  }
  v.require(noop, "FORCE_RESYNC is architecturally a no-op");
  if (noop) v.note("FORCE_RESYNC round trip leaves registers unchanged");
  return v;
}

Verdict determinism() {
  Verdict v;
  auto traced = [](KernelKind k, Mode m) {
    std::string t;
    Cluster c;
    c.set_trace([&](uint64_t cy, unsigned core, const Retired& r) {
      t += format_trace_line(cy, core, r);
      t += '\n';
    });
    c.boot(m, gen_kernel({k, kMaxHarts, 1}));
    c.run(10'000'000);
    return t;
  };
  for (Mode m : {Mode::Tmr, Mode::Performance})
    v.require(traced(KernelKind::MatMul24, m) == traced(KernelKind::MatMul24, m),
              fmt::format("identical {} traces", to_string(m)));

  CampaignConfig cfg;
  cfg.kernel = KernelKind::Conv2D16;
  cfg.faults = RandomFaults{40, 5, {TargetClass::Gpr, TargetClass::Csr, TargetClass::Pc, TargetClass::Interface}};
  const CampaignReport r1 = campaign(cfg);
  cfg.jobs = 1;
  const CampaignReport r2 = campaign(cfg);
  v.require(report_jsonl(r1) == report_jsonl(r2) && report_csv(r1) == report_csv(r2), "identical reports");

  for (KernelKind k : kAllKernels) {
    Cluster c;
    c.boot(Mode::Tmr, gen_kernel({k, kMaxHarts, 1}));
    const RunResult res = c.run(10'000'000);
    bool zero = res.exit_code == 0u && c.divergent_cycles() == 0 && c.episodes().empty();
    for (const OdrgState& o : c.state().odrg) zero = zero && o.mismatch_count == std::array<uint32_t, 3>{};
    v.require(zero, fmt::format("{} fault-free lockstep", kernel_name(k)));
  }
  if (v.pass) v.note("traces and reports byte-identical, no divergent cycles, counters zero");
  return v;
}

Verdict fairness() {
  Verdict v;
  for (unsigned k = 2; k <= kNumCores; ++k) {
    BankRequests req{};
    for (unsigned p = 0; p < k; ++p) req[p] = 5;
    RrPointers rr{};
    bool ok = true;
    for (unsigned window = 0; window < 20; ++window) {
      std::array<unsigned, kNumCores> grants{};
      for (unsigned t = 0; t < k; ++t) {
        const ArbResult r = arbitrate(req, rr);
        rr = r.rr;
        for (unsigned p = 0; p < kNumCores; ++p) grants[p] += r.grant[p];
      }
      for (unsigned p = 0; p < k; ++p) ok = ok && grants[p] == 1;
    }
    v.require(ok, fmt::format("k={} each port once per {} cycles", k, k));
  }
  // Uncontended: every port on its own bank, any pointer state.
  bool free = true;
  for (unsigned ptr = 0; ptr < kNumCores; ++ptr) {
    BankRequests req{};
    for (unsigned p = 0; p < kNumCores; ++p) req[p] = 2 * p + 1;
    RrPointers rr{};
    rr.fill(static_cast<uint8_t>(ptr));
    const ArbResult r = arbitrate(req, rr);
    for (unsigned p = 0; p < kNumCores; ++p) free = free && r.grant[p];
  }
  v.require(free, "uncontended accesses never stall");
  // A single hart streaming loads runs at one instruction per cycle.
  std::string body = "main:\n  bnez a0, __park\n  li t0, 0x10000000\n";
  for (int i = 0; i < 64; ++i) body += fmt::format("  lw t1, {}(t0)\n", 4 * i);
  body += "  li t1, 0x10200FF0\n  sw zero, 0(t1)\n  j __park\n";
  Cluster c;
  c.boot(Mode::Performance, build_program(body, 1));
  uint64_t load_cycles = 0, load_retired = 0;
  bool in_loads = false;
  while (!c.state().halted() && c.state().cycle < 10000) {
    const CycleReport r = c.step();
    const bool is_load = r.retired[0] && (r.retired[0]->instr & 0x7F) == 0x03 &&
                         ((r.retired[0]->instr >> 7) & 31) == 6;
    if (is_load) in_loads = true;
    if (in_loads && load_retired < 64) {
      ++load_cycles;
      load_retired += is_load;
    }
  }
  v.require(load_retired == 64 && load_cycles == 64, "back-to-back loads without stalls");
  if (v.pass) v.note("k=2..6 round-robin exact, zero stalls when uncontended");
  return v;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"speedup", speedup},         {"resync latency", resync_latency}, {"tmr single-fault safety", tmr_safety},
      {"voter oracle", voter},      {"reboot overhead", reboot_cost},   {"41-register save set", save_set},
      {"determinism and lockstep", determinism}, {"round-robin fairness", fairness},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    failed += !v.pass;
    fmt::print("criterion {} {}: {} ({})\n", i + 1, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
