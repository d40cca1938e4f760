#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "odrg/cluster.hpp"
#include "odrg/firmware.hpp"

namespace odrg {

struct SignalTarget {
  Signal signal;
  bool operator==(const SignalTarget&) const = default;
};
using FaultTarget = std::variant<GprTarget, PcTarget, CsrTarget, SignalTarget>;

// Text form: "x5", "pc", a CSR name ("mstatus"), or "iface:<signal>".
std::string target_name(const FaultTarget& t);
std::optional<FaultTarget> target_from_name(std::string_view name);

struct FaultSpec {
  uint64_t cycle = 0;
  unsigned core = 0;
  FaultTarget target = GprTarget{1};
  unsigned bit = 0;
  bool operator==(const FaultSpec&) const = default;
};

// Throws InvalidFault for nonexistent cores, targets or bits.
void validate(const FaultSpec& f);

enum class OutcomeClass : uint8_t { Masked, DetectedCorrected, SilentDataCorruption, Hang };
const char* to_string(OutcomeClass c);

struct Outcome {
  OutcomeClass cls = OutcomeClass::Masked;
  std::optional<uint64_t> resync_cycles;  // first episode, irq to TmrRun
  unsigned resync_episodes = 0;
  bool snapshots_equal = true;  // every episode ended with equal group snapshots
  std::array<uint32_t, 3> mismatch_counts{};  // ODRG unit of the faulted core
  uint64_t total_cycles = 0;
  std::optional<uint32_t> exit_code;
};

struct RunOptions {
  uint32_t resync_delay = 0;
  uint64_t max_cycles = 50'000'000;       // golden run limit
  uint64_t checkpoint_interval = 1024;  // golden snapshots for fast-forward
};

struct GoldenRef {
  Mode mode = Mode::Tmr;
  RunOptions opts;
  std::shared_ptr<const ProgramImage> image;
  uint32_t exit_code = 0;
  uint64_t total_cycles = 0;
  uint64_t reboot_cycles = 0;
  std::vector<uint32_t> final_tcdm;
  std::vector<ClusterState> checkpoints;  // checkpoints[i] at cycle i * interval
};

// Throws Timeout if the exit register is not written within opts.max_cycles.
GoldenRef golden_run(const ProgramImage& image, Mode mode, const RunOptions& opts = {});

// Final artifacts of a faulted run; the classification is a pure function
// of these and the golden reference.
struct FaultedRun {
  std::optional<uint32_t> exit_code;
  bool timed_out = false;
  uint64_t total_cycles = 0;
  std::vector<uint32_t> final_tcdm;
  std::vector<ResyncEpisode> episodes;
  std::array<uint32_t, 3> mismatch_counts{};
};

OutcomeClass classify(const GoldenRef& golden, const FaultedRun& run);

// Runs the golden program with one upset and classifies it. The hang
// timeout is timeout_factor x the golden cycle count.
Outcome run_with_fault(const GoldenRef& golden, const FaultSpec& fault, double timeout_factor = 4.0);
FaultedRun simulate_fault(const GoldenRef& golden, const FaultSpec& fault, double timeout_factor);

struct ResyncSample {
  uint64_t injection_cycle = 0;
  OutcomeClass cls = OutcomeClass::Masked;
  std::optional<uint64_t> resync_cycles;
  uint64_t other_group_retired = 0;  // instructions retired by the other group during the episode
  bool snapshots_equal = false;
};

struct ResyncStats {
  std::vector<ResyncSample> samples;
  uint64_t min = 0;
  uint64_t max = 0;
  double mean = 0.0;
  bool all_detected_corrected = false;
  bool other_group_progressed = false;
};

// Interface-bit upsets on group 0 at each injection cycle (Tmr mode).
ResyncStats measure_resync(const GoldenRef& golden, const std::vector<uint64_t>& injection_cycles);

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchRow {
  KernelKind kernel = KernelKind::MatMul24;
  uint64_t tmr_cycles = 0;
  uint64_t performance_cycles = 0;
  uint64_t reboot_cycles = 0;  // largest of the two boots
  bool passed = false;         // both runs exited with status 0
  double speedup() const {
    return static_cast<double>(tmr_cycles) / static_cast<double>(performance_cycles);
  }
};

// Runs the kernel once per mode. Cycle counts exclude the reboot.
BenchRow bench_kernel(KernelKind k, uint64_t seed, uint64_t max_cycles = 10'000'000);

// ---------------------------------------------------------------------------
// Campaigns

enum class TargetClass : uint8_t { Gpr, Csr, Pc, Interface };
const char* to_string(TargetClass t);

struct RandomFaults {
  uint64_t count = 0;
  uint64_t seed = 0;
  std::vector<TargetClass> targets = {TargetClass::Gpr, TargetClass::Csr, TargetClass::Interface};
};

struct CampaignConfig {
  KernelKind kernel = KernelKind::MatMul24;
  Mode mode = Mode::Tmr;
  uint64_t kernel_seed = 1;
  std::variant<RandomFaults, std::vector<FaultSpec>> faults = RandomFaults{};
  double timeout_factor = 4.0;
  uint32_t resync_delay = 0;
  unsigned jobs = 0;  // 0: one per hardware thread
};

// Parses the JSON campaign description. Throws ConfigError naming the
// offending field.
CampaignConfig parse_campaign_config(std::string_view json_text);

// Deterministic sample of `r.count` faults over the golden run.
std::vector<FaultSpec> sample_faults(const RandomFaults& r, uint64_t golden_cycles);

struct RunRecord {
  std::size_t index = 0;
  FaultSpec fault;
  Outcome outcome;
};

struct CampaignReport {
  CampaignConfig config;
  uint64_t golden_cycles = 0;
  std::vector<RunRecord> runs;  // sorted by index
  std::map<OutcomeClass, uint64_t> counts;
  std::map<uint64_t, uint64_t> resync_histogram;  // bucket start (10-cycle bins) -> runs
  std::optional<uint64_t> resync_min, resync_max;
  double resync_mean = 0.0;
  bool snapshots_equal = true;

  uint64_t count(OutcomeClass c) const {
    auto it = counts.find(c);
    return it == counts.end() ? 0 : it->second;
  }
};

CampaignReport campaign(const CampaignConfig& cfg);

// One JSON object per run followed by a summary object, newline-separated.
std::string report_jsonl(const CampaignReport& r);
std::string report_csv(const CampaignReport& r);

}  // namespace odrg
