#include <algorithm>
#include <random>
#include <string>

#include "doctest.h"
#include "odrg/assembler.hpp"
#include "odrg/cluster.hpp"
#include "odrg/error.hpp"
#include "odrg/firmware.hpp"
#include "odrg/isa.hpp"

using namespace odrg;

namespace {

RunResult boot_and_run(Cluster& c, Mode mode, const ProgramImage& img, uint64_t max = 2'000'000) {
  c.boot(mode, img);
  return c.run(max);
}

// main: write `value_expr` (computed into t0 by `code`) to the exit register.
ProgramImage exit_with(const std::string& code) {
  return build_program("main:\n" + code + "\n  li t1, 0x10200FF0\n  sw t0, 0(t1)\n  j __park\n");
}

}  // namespace

TEST_SUITE("cluster") {
  TEST_CASE("bank routing") {
    CHECK(bank_route(0x10000000) == BankSlot{0, 0});
    CHECK(bank_route(0x10000004) == BankSlot{1, 0});
    CHECK(bank_route(0x1000003C) == BankSlot{15, 0});
    CHECK(bank_route(0x10000040) == BankSlot{0, 1});
    CHECK(bank_route(0x1000FFFC) == BankSlot{15, 1023});
    CHECK(bank_route(0x10000006) == BankSlot{1, 0});
    CHECK_THROWS_AS(bank_route(0x0FFFFFFC), OutOfRange);
    CHECK_THROWS_AS(bank_route(0x10010000), OutOfRange);
  }

  TEST_CASE("arbitration example") {
    BankRequests req{};
    req[1] = 3;
    req[4] = 3;
    RrPointers rr{};
    rr[3] = 2;
    const ArbResult r = arbitrate(req, rr);
    CHECK_FALSE(r.grant[1]);
    CHECK(r.grant[4]);
    CHECK(r.rr[3] == 5);
  }

  TEST_CASE("uncontended requests are all granted without moving pointers") {
    BankRequests req{};
    for (unsigned p = 0; p < kNumCores; ++p) req[p] = p * 2;
    RrPointers rr{};
    rr[4] = 3;
    const ArbResult r = arbitrate(req, rr);
    for (unsigned p = 0; p < kNumCores; ++p) CHECK(r.grant[p]);
    CHECK(r.rr == rr);
  }

  TEST_CASE("round-robin fairness for k persistent requesters") {
    for (unsigned k = 2; k <= kNumCores; ++k) {
      BankRequests req{};
      for (unsigned p = 0; p < k; ++p) req[p] = 7;
      RrPointers rr{};
      std::array<unsigned, kNumCores> grants{}, wait{}, max_wait{};
      const unsigned rounds = 50;
      for (unsigned t = 0; t < k * rounds; ++t) {
        const ArbResult r = arbitrate(req, rr);
        rr = r.rr;
        CHECK(std::count(r.grant.begin(), r.grant.end(), true) == 1);
        for (unsigned p = 0; p < k; ++p) {
          if (r.grant[p]) {
            ++grants[p];
            wait[p] = 0;
          } else {
            max_wait[p] = std::max(max_wait[p], ++wait[p]);
          }
        }
      }
      for (unsigned p = 0; p < k; ++p) {
        CAPTURE(k);
        CAPTURE(p);
        CHECK(grants[p] == rounds);
        CHECK(max_wait[p] <= k - 1);
      }
    }
  }

  TEST_CASE("random arbitration: at most one grant per bank, every idle-free bank served") {
    std::mt19937 rng(17);
    RrPointers rr{};
    for (int n = 0; n < 20000; ++n) {
      BankRequests req{};
      for (auto& r : req)
        if (rng() % 2) r = rng() % 4;
      const ArbResult a = arbitrate(req, rr);
      for (unsigned b = 0; b < 4; ++b) {
        unsigned want = 0, got = 0;
        for (unsigned p = 0; p < kNumCores; ++p)
          if (req[p] == b) {
            ++want;
            got += a.grant[p];
          }
        CHECK(got == (want ? 1u : 0u));
      }
      for (unsigned p = 0; p < kNumCores; ++p)
        if (!req[p]) CHECK_FALSE(a.grant[p]);
      rr = a.rr;
    }
  }

  TEST_CASE("tcdm byte enables") {
    Tcdm t;
    t.store(0x10000040, 0x11223344, 0xF);
    t.store(0x10000040, 0xAABBCCDD, 0x6);
    CHECK(t.load(0x10000040) == 0x11BBCC44u);
    CHECK(t.bank_word(0, 1) == 0x11BBCC44u);
  }

  TEST_CASE("hart ids and counts per mode") {
    CHECK(logical_harts(Mode::Tmr) == 2);
    CHECK(logical_harts(Mode::Performance) == 6);
    for (unsigned c = 0; c < kNumCores; ++c) {
      CHECK(logical_hartid(Mode::Tmr, c) == c / 3);
      CHECK(logical_hartid(Mode::Performance, c) == c);
    }
  }

  TEST_CASE("wfi program puts every core to sleep") {
    const ProgramImage img = assemble("_start: wfi\nj _start\n");
    Cluster c;
    c.boot(Mode::Performance, img);
    for (int i = 0; i < 20; ++i) c.step();
    for (const CoreState& s : c.state().cores) CHECK(s.sleeping);
    const RunResult r = c.run(c.state().cycle + 1000);
    CHECK(r.timed_out);
    CHECK_FALSE(r.exit_code);
  }

  TEST_CASE("active harts per mode") {
    // Every active hart marks its slot; hart 0 reports the count after a barrier.
    const std::string body = R"(
main:
  li t0, 0x10000000
  slli t1, a0, 2
  add t0, t0, t1
  addi t1, a0, 1
  sw t1, 0(t0)
  li t2, 0x10200800
  lw zero, 0(t2)
  bnez a0, __park
  li t0, 0x10000000
  li t3, 0
  li t4, 0
count:
  lw t1, 0(t0)
  beqz t1, skip
  addi t3, t3, 1
skip:
  addi t0, t0, 4
  addi t4, t4, 1
  li t5, 8
  bltu t4, t5, count
  li t1, 0x10200FF0
  sw t3, 0(t1)
  j __park
)";
    const ProgramImage img = build_program(body);
    Cluster tmr, perf;
    CHECK(boot_and_run(tmr, Mode::Tmr, img).exit_code == 2u);
    CHECK(boot_and_run(perf, Mode::Performance, img).exit_code == 6u);
    CHECK(tmr.divergent_cycles() == 0);
  }

  TEST_CASE("status register reflects the mode") {
    const ProgramImage img = exit_with("  li t1, 0x10200018\n  lw t0, 0(t1)");
    Cluster tmr, perf;
    CHECK(boot_and_run(tmr, Mode::Tmr, img).exit_code == static_cast<uint32_t>(FsmState::TmrRun));
    CHECK(boot_and_run(perf, Mode::Performance, img).exit_code ==
          static_cast<uint32_t>(FsmState::Independent));
  }

  TEST_CASE("RESYNC_DELAY is readable from software") {
    const ProgramImage img = exit_with(
        "  li t1, 0x10200104\n  li t2, 777\n  sw t2, 0(t1)\n  lw t0, 0(t1)");
    Cluster c;
    CHECK(boot_and_run(c, Mode::Performance, img).exit_code == 777u);
    CHECK(c.state().odrg[1].resync_delay == 777u);
  }

  TEST_CASE("unmapped peripheral access traps") {
    const ProgramImage img = exit_with("  li t1, 0x10200400\n  lw t0, 0(t1)");
    Cluster c;
    CHECK(boot_and_run(c, Mode::Performance, img).exit_code == 0x100u + cause::kLoadAccessFault);
  }

  TEST_CASE("reboot cost") {
    for (KernelKind k : kAllKernels) {
      const ProgramImage img = gen_kernel({k, 6, 1});
      for (Mode m : {Mode::Tmr, Mode::Performance}) {
        ClusterState s;
        const uint64_t cost = reset_and_boot(s, m, img);
        CHECK(cost < 40000);
        CHECK(cost >= kRebootOverheadCycles + img.words.size() + img.data_words());
      }
    }
    ClusterState s;
    ProgramImage huge;
    huge.load_addr = map::kImemBase;
    huge.entry = map::kImemBase;
    huge.words.assign(map::kImemSize / 4 + 1, 0);
    CHECK_THROWS_AS(reset_and_boot(s, Mode::Tmr, huge), ImageTooLarge);
  }

  TEST_CASE("same-bank stores are serialized") {
    // Harts 0 and 1 hammer one word; 64 stores each.
    std::string body = "main:\n  li t1, 2\n  bgeu a0, t1, __park\n  li t0, 0x10000100\n";
    for (int i = 0; i < 64; ++i) body += "  sw a0, 0(t0)\n";
    body += "  li t2, 0x10200800\n  lw zero, 0(t2)\n  bnez a0, __park\n"
            "  li t1, 0x10200FF0\n  sw zero, 0(t1)\n  j __park\n";
    ProgramImage img = build_program(body, 2);
    Cluster c;
    c.boot(Mode::Performance, img);
    uint64_t both = 0, stores = 0;
    while (!c.state().halted() && c.state().cycle < 100000) {
      const CycleReport r = c.step();
      unsigned n = 0;
      for (unsigned p = 0; p < 2; ++p)
        if (r.retired[p] && (r.retired[p]->instr & 0x7F) == 0x23 && ((r.retired[p]->instr >> 20) & 31) == 10) ++n;
      both += n == 2;
      stores += n;
    }
    REQUIRE(c.state().exit_code == 0u);
    CHECK(stores == 128);
    // Granted stores to one bank cannot complete in the same cycle; the retire
    // of the following store is delayed by one cycle for the loser.
    CHECK(both <= 1);
  }

  TEST_CASE("every store lands exactly once under heavy bank conflicts") {
    std::string body = R"(
main:
  li t0, 0x10000000
  slli t1, a0, 2
  add t0, t0, t1
  li t2, 0
loop:
  slli t3, a0, 16
  or t3, t3, t2
  sw t3, 0(t0)
  addi t0, t0, 24
  addi t2, t2, 1
  li t4, 64
  bltu t2, t4, loop
  li t5, 0x10200800
  lw zero, 0(t5)
  bnez a0, __park
  li t1, 0x10200FF0
  sw zero, 0(t1)
  j __park
)";
    Cluster c;
    REQUIRE(boot_and_run(c, Mode::Performance, build_program(body)).exit_code == 0u);
    for (uint32_t h = 0; h < 6; ++h)
      for (uint32_t k = 0; k < 64; ++k)
        CHECK(c.state().tcdm.load(map::kTcdmBase + 4 * (k * 6 + h)) == ((h << 16) | k));
  }

  TEST_CASE("barrier releases nobody before the last arrival") {
    // Hart i spins 50*i iterations, logs arrival and departure cycles.
    const std::string body = R"(
main:
  li t0, 50
  mul t0, t0, a0
spin:
  beqz t0, arrive
  addi t0, t0, -1
  j spin
arrive:
  li t1, 0x10200C0C
  slli t2, a0, 2
  li t3, 0x10000000
  add t3, t3, t2
  lw t4, 0(t1)
  sw t4, 0(t3)
  li t5, 0x10200800
  lw zero, 0(t5)
  lw t4, 0(t1)
  sw t4, 32(t3)
  lw zero, 0(t5)
  bnez a0, __park
  li t1, 0x10200FF0
  sw zero, 0(t1)
  j __park
)";
    Cluster c;
    REQUIRE(boot_and_run(c, Mode::Performance, build_program(body)).exit_code == 0u);
    uint32_t last_arrival = 0, first_departure = 0xFFFFFFFF;
    for (uint32_t h = 0; h < 6; ++h) {
      last_arrival = std::max(last_arrival, c.state().tcdm.load(map::kTcdmBase + 4 * h));
      first_departure = std::min(first_departure, c.state().tcdm.load(map::kTcdmBase + 32 + 4 * h));
    }
    CHECK(last_arrival > 0);
    CHECK(first_departure > last_arrival);
  }

  TEST_CASE("simulation is deterministic") {
    const ProgramImage img = gen_kernel({KernelKind::MatMul24, 6, 3});
    for (Mode m : {Mode::Tmr, Mode::Performance}) {
      Cluster a, b;
      std::string ta, tb;
      a.set_trace([&](uint64_t cy, unsigned core, const Retired& r) { ta += format_trace_line(cy, core, r) + "\n"; });
      b.set_trace([&](uint64_t cy, unsigned core, const Retired& r) { tb += format_trace_line(cy, core, r) + "\n"; });
      const RunResult ra = boot_and_run(a, m, img), rb = boot_and_run(b, m, img);
      CHECK(ra.exit_code == 0u);
      CHECK(ra.cycles == rb.cycles);
      CHECK(a.state() == b.state());
      CHECK(ta == tb);
      CHECK_FALSE(ta.empty());
    }
  }

  TEST_CASE("value-form cycle equals in-place cycle") {
    ClusterState s;
    reset_and_boot(s, Mode::Tmr, gen_kernel({KernelKind::Conv2D16, 6, 1}));
    for (int i = 0; i < 500; ++i) {
      const ClusterState next = cluster_cycle(ClusterState(s));
      cluster_cycle(s, nullptr);
      REQUIRE(next == s);
    }
  }

  TEST_CASE("trace line format") {
    const Retired r{0x1000, 0x00500093};
    CHECK(format_trace_line(12, 3, r) == "12,3,0x00001000,0x00500093,addi x1, x0, 5");
  }
}
