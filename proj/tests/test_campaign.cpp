#include <string>

#include "doctest.h"
#include "odrg/assembler.hpp"
#include "odrg/campaign.hpp"
#include "odrg/error.hpp"

using namespace odrg;

namespace {

const GoldenRef& golden(Mode m) {
  static const GoldenRef tmr = golden_run(gen_kernel({KernelKind::MatMul24, 6, 1}), Mode::Tmr);
  static const GoldenRef perf = golden_run(gen_kernel({KernelKind::MatMul24, 6, 1}), Mode::Performance);
  return m == Mode::Tmr ? tmr : perf;
}

std::string config_error(const std::string& json) {
  try {
    parse_campaign_config(json);
  } catch (const ConfigError& e) {
    return e.what();
  }
  FAIL("expected a ConfigError for " << json);
  return {};
}

}  // namespace

TEST_SUITE("campaign") {
  TEST_CASE("target names round-trip") {
    for (const FaultTarget& t :
         {FaultTarget{GprTarget{5}}, FaultTarget{PcTarget{}}, FaultTarget{CsrTarget{csr::kMstatus}},
          FaultTarget{SignalTarget{Signal::DataWdata}}}) {
      const auto back = target_from_name(target_name(t));
      REQUIRE(back);
      CHECK(*back == t);
    }
    CHECK(target_name(GprTarget{5}) == "x5");
    CHECK(target_name(SignalTarget{Signal::FetchAddr}) == "iface:fetch_addr");
    CHECK_FALSE(target_from_name("x32"));
    CHECK_FALSE(target_from_name("iface:nothing"));
    CHECK_FALSE(target_from_name("cycle"));
  }

  TEST_CASE("fault validation") {
    CHECK_NOTHROW(validate({0, 5, GprTarget{31}, 31}));
    CHECK_THROWS_AS(validate({0, 6, GprTarget{1}, 0}), InvalidFault);
    CHECK_THROWS_AS(validate({0, 0, GprTarget{0}, 0}), InvalidFault);
    CHECK_THROWS_AS(validate({0, 0, GprTarget{1}, 32}), InvalidFault);
    CHECK_THROWS_AS(validate({0, 0, CsrTarget{0x7C0}, 0}), InvalidFault);
    CHECK_THROWS_AS(validate({0, 0, SignalTarget{Signal::FetchValid}, 1}), InvalidFault);
  }

  TEST_CASE("golden run is deterministic") {
    const ProgramImage img = gen_kernel({KernelKind::Conv2D16, 6, 1});
    const GoldenRef a = golden_run(img, Mode::Tmr), b = golden_run(img, Mode::Tmr);
    CHECK(a.exit_code == 0);
    CHECK(a.total_cycles == b.total_cycles);
    CHECK(a.final_tcdm == b.final_tcdm);
    CHECK(a.checkpoints.size() == b.checkpoints.size());
    CHECK(a.checkpoints.size() == a.total_cycles / 1024 + 1);
    CHECK(a.reboot_cycles > kRebootOverheadCycles);
  }

  TEST_CASE("a program that never exits times out") {
    const ProgramImage img = assemble("_start: j _start\n");
    RunOptions o;
    o.max_cycles = 5000;
    CHECK_THROWS_AS(golden_run(img, Mode::Tmr, o), Timeout);
  }

  TEST_CASE("classification") {
    const GoldenRef& g = golden(Mode::Tmr);
    FaultedRun r;
    r.exit_code = g.exit_code;
    r.final_tcdm = g.final_tcdm;
    CHECK(classify(g, r) == OutcomeClass::Masked);
    r.episodes.push_back({0, 10, 130, 50, true});
    CHECK(classify(g, r) == OutcomeClass::DetectedCorrected);
    r.final_tcdm[0] ^= 1;
    CHECK(classify(g, r) == OutcomeClass::SilentDataCorruption);
    r.final_tcdm = g.final_tcdm;
    r.exit_code = g.exit_code + 1;
    CHECK(classify(g, r) == OutcomeClass::SilentDataCorruption);
    r.exit_code.reset();
    r.timed_out = true;
    CHECK(classify(g, r) == OutcomeClass::Hang);
    // Stack contents are scratch and do not count.
    FaultedRun s;
    s.exit_code = g.exit_code;
    s.final_tcdm = g.final_tcdm;
    s.final_tcdm[(g.image->stack_region.begin - map::kTcdmBase) / 4] ^= 0xFF;
    CHECK(classify(g, s) == OutcomeClass::Masked);
  }

  TEST_CASE("interface upset in TMR is detected and corrected") {
    const GoldenRef& g = golden(Mode::Tmr);
    const Outcome o = run_with_fault(g, {g.total_cycles / 2, 1, SignalTarget{Signal::FetchAddr}, 2});
    CHECK(o.cls == OutcomeClass::DetectedCorrected);
    CHECK(o.resync_episodes == 1);
    REQUIRE(o.resync_cycles);
    CHECK(*o.resync_cycles > 0);
    CHECK(o.snapshots_equal);
    CHECK(o.mismatch_counts[1] >= 1);
    CHECK(o.mismatch_counts[0] == 0);
    CHECK(o.mismatch_counts[2] == 0);
    CHECK(o.exit_code == 0u);
  }

  TEST_CASE("an upset in state that is never read is masked") {
    const GoldenRef& g = golden(Mode::Tmr);
    const Outcome o = run_with_fault(g, {g.total_cycles / 2, 2, CsrTarget{csr::kMscratch}, 9});
    CHECK(o.cls == OutcomeClass::Masked);
    CHECK(o.resync_episodes == 0);
    const Outcome p = run_with_fault(golden(Mode::Performance), {1000, 3, CsrTarget{csr::kMscratch}, 9});
    CHECK(p.cls == OutcomeClass::Masked);
  }

  TEST_CASE("performance mode has no protection") {
    const GoldenRef& g = golden(Mode::Performance);
    unsigned corrupted = 0;
    for (unsigned r = 5; r < 32; ++r) {
      const Outcome o = run_with_fault(g, {g.total_cycles / 3, 0, GprTarget{r}, 4});
      CHECK(o.cls != OutcomeClass::DetectedCorrected);
      CHECK(o.resync_episodes == 0);
      if (o.cls == OutcomeClass::SilentDataCorruption || o.cls == OutcomeClass::Hang) ++corrupted;
    }
    CHECK(corrupted > 0);
  }

  TEST_CASE("a fault after the program ended is rejected") {
    const GoldenRef& g = golden(Mode::Tmr);
    CHECK_THROWS_AS(run_with_fault(g, {g.total_cycles + 5, 0, GprTarget{1}, 0}), InvalidFault);
  }

  TEST_CASE("sampling is deterministic and in range") {
    RandomFaults r{500, 42, {TargetClass::Gpr, TargetClass::Csr, TargetClass::Pc, TargetClass::Interface}};
    const auto a = sample_faults(r, 10000), b = sample_faults(r, 10000);
    CHECK(a == b);
    REQUIRE(a.size() == 500);
    for (const FaultSpec& f : a) {
      CHECK(f.cycle < 10000);
      CHECK_NOTHROW(validate(f));
      if (const auto* c = std::get_if<CsrTarget>(&f.target)) CHECK(c->number != csr::kMhartid);
    }
    r.seed = 43;
    CHECK(sample_faults(r, 10000) != a);
  }

  TEST_CASE("campaign reports are reproducible") {
    const CampaignConfig cfg = parse_campaign_config(R"({
      "kernel": "matmul24", "mode": "tmr", "jobs": 2,
      "faults": {"random": {"count": 12, "seed": 7}}
    })");
    const CampaignReport a = campaign(cfg), b = campaign(cfg);
    CHECK(report_jsonl(a) == report_jsonl(b));
    CHECK(report_csv(a) == report_csv(b));
    CHECK(a.runs.size() == 12);
    uint64_t total = 0;
    for (const auto& [cls, n] : a.counts) total += n;
    CHECK(total == 12);
    CHECK(a.count(OutcomeClass::SilentDataCorruption) == 0);
    CHECK(a.count(OutcomeClass::Hang) == 0);
    const std::string j = report_jsonl(a);
    CHECK(std::count(j.begin(), j.end(), '\n') == 13);
    CHECK(j.find("{\"summary\":") != std::string::npos);
  }

  TEST_CASE("explicit fault list, including an empty one") {
    const CampaignConfig cfg = parse_campaign_config(R"({
      "kernel": "conv16", "mode": "tmr",
      "faults": {"explicit": [{"cycle": 5000, "core": 4, "target": "iface:data_wdata", "bit": 0},
                              {"cycle": 9000, "core": 0, "target": "x8", "bit": 31}]}
    })");
    const CampaignReport r = campaign(cfg);
    REQUIRE(r.runs.size() == 2);
    CHECK(r.runs[0].fault.core == 4);
    CHECK(r.runs[1].fault.target == FaultTarget{GprTarget{8}});

    const CampaignReport e =
        campaign(parse_campaign_config(R"({"kernel":"matmul24","mode":"performance","faults":{"explicit":[]}})"));
    CHECK(e.runs.empty());
    CHECK_FALSE(e.resync_min);
    CHECK(report_jsonl(e).find("\"runs\":0") != std::string::npos);
  }

  TEST_CASE("configuration errors name the field") {
    CHECK(config_error("{").find("invalid JSON") != std::string::npos);
    CHECK(config_error(R"({"mode":"tmr","faults":{"explicit":[]}})").find("kernel") == 0);
    CHECK(config_error(R"({"kernel":"fft","mode":"tmr","faults":{"explicit":[]}})").find("kernel:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"dual","faults":{"explicit":[]}})").find("mode:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","faults":{"random":{"count":-1}}})")
              .find("faults.random.count:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","faults":{"random":{"count":1,"targets":["fpu"]}}})")
              .find("faults.random.targets[0]:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","color":"red","faults":{"explicit":[]}})")
              .find("color:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","faults":{"explicit":[{"cycle":1,"core":9,"target":"x1","bit":0}]}})")
              .find("faults.explicit[0]:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","faults":{"explicit":[{"cycle":1,"core":0,"target":"x1"}]}})")
              .find("faults.explicit[0].bit:") == 0);
    CHECK(config_error(R"({"kernel":"conv16","mode":"tmr","timeout_factor":0.5,"faults":{"explicit":[]}})")
              .find("timeout_factor:") == 0);
    CHECK_THROWS_AS(campaign(parse_campaign_config(
                        R"({"kernel":"matmul24","mode":"tmr","faults":{"explicit":[{"cycle":99999999,"core":0,"target":"x1","bit":0}]}})")),
                    ConfigError);
  }

  TEST_CASE("resync measurement") {
    const GoldenRef& g = golden(Mode::Tmr);
    const ResyncStats s = measure_resync(g, {g.total_cycles / 5, g.total_cycles / 2, 4 * g.total_cycles / 5});
    REQUIRE(s.samples.size() == 3);
    CHECK(s.all_detected_corrected);
    CHECK(s.other_group_progressed);
    CHECK(s.min <= s.max);
    CHECK(s.mean >= static_cast<double>(s.min));
    CHECK(s.mean <= static_cast<double>(s.max));
    for (const ResyncSample& x : s.samples) {
      CHECK(x.snapshots_equal);
      CHECK(x.other_group_retired > 0);
    }
  }
}
