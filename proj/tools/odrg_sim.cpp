// odrg-sim: command-line driver for the cluster simulator.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "odrg/assembler.hpp"
#include "odrg/campaign.hpp"
#include "odrg/cluster.hpp"
#include "odrg/error.hpp"
#include "odrg/firmware.hpp"

using namespace odrg;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTimeout = 124;

struct RunConfig {
  std::string mode = "tmr";
  std::string kernel;
  std::string program;
  std::string trace;
  uint64_t max_cycles = 10'000'000;
  uint32_t resync_delay = 0;
  uint64_t seed = 1;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

Mode parse_mode(const std::string& m) {
  if (m == "tmr") return Mode::Tmr;
  if (m == "performance" || m == "perf") return Mode::Performance;
  throw UsageError("--mode must be 'tmr' or 'performance', got '" + m + "'");
}

// Values from a JSON run config; only keys present override the defaults.
void apply_run_config_file(RunConfig& rc, const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ConfigError(path + ": expected a JSON object");
  auto str = [&](const char* key, std::string& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_string()) throw ConfigError(fmt::format("{}: expected a string", key));
    dst = j[key].get<std::string>();
  };
  auto num = [&](const char* key, auto& dst) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_unsigned())
      throw ConfigError(fmt::format("{}: expected a non-negative integer", key));
    dst = j[key].get<std::decay_t<decltype(dst)>>();
  };
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> known = {"mode",         "kernel",       "program", "trace",
                                                "max_cycles",   "resync_delay", "seed"};
    if (!known.count(key)) throw ConfigError(key + ": unknown field");
  }
  str("mode", rc.mode);
  str("kernel", rc.kernel);
  str("program", rc.program);
  str("trace", rc.trace);
  num("max_cycles", rc.max_cycles);
  num("resync_delay", rc.resync_delay);
  num("seed", rc.seed);
}

ProgramImage load_image(const RunConfig& rc) {
  if (rc.kernel.empty() == rc.program.empty())
    throw UsageError("exactly one of --kernel or --program is required");
  if (!rc.kernel.empty()) {
    auto k = kernel_from_name(rc.kernel);
    if (!k) throw UsageError("unknown kernel '" + rc.kernel + "' (conv16, matmul24, matmul32)");
    return gen_kernel({*k, kMaxHarts, rc.seed});
  }
  return assemble(read_file(rc.program));
}

int exit_status(const RunResult& r) {
  if (r.timed_out) return kExitTimeout;
  const uint32_t code = *r.exit_code;
  if (code == 0) return 0;
  return code < 256 ? static_cast<int>(code) : 1;
}

int cmd_run(const RunConfig& rc, bool trace_to_stdout) {
  const Mode mode = parse_mode(rc.mode);
  const ProgramImage img = load_image(rc);
  Cluster cl;
  const uint64_t reboot = cl.boot(mode, img, {std::nullopt, rc.resync_delay});

  std::ofstream trace_file;
  std::ostream* trace = nullptr;
  if (!rc.trace.empty() && rc.trace != "-") {
    trace_file.open(rc.trace, std::ios::binary);
    if (!trace_file) throw std::runtime_error("cannot write " + rc.trace);
    trace = &trace_file;
  } else if (trace_to_stdout || rc.trace == "-") {
    trace = &std::cout;
  }
  if (trace) {
    cl.set_trace([trace](uint64_t cycle, unsigned core, const Retired& r) {
      *trace << format_trace_line(cycle, core, r) << '\n';
    });
  }

  const RunResult r = cl.run(rc.max_cycles);
  if (trace) trace->flush();
  // With the trace on stdout, the summary goes to stderr.
  std::FILE* out = trace == &std::cout ? stderr : stdout;
  fmt::print(out, "mode:           {}\n", to_string(mode));
  fmt::print(out, "reboot cycles:  {}\n", reboot);
  fmt::print(out, "cycles:         {}\n", r.cycles);
  if (r.timed_out) fmt::print(out, "exit code:      none (timeout after {} cycles)\n", rc.max_cycles);
  else fmt::print(out, "exit code:      {}\n", *r.exit_code);
  const auto& s = cl.state();
  for (unsigned g = 0; g < kNumGroups; ++g)
    fmt::print(out, "odrg{}:          {} mismatches {}/{}/{}\n", g, to_string(s.odrg[g].fsm),
               s.odrg[g].mismatch_count[0], s.odrg[g].mismatch_count[1], s.odrg[g].mismatch_count[2]);
  fmt::print(out, "resync episodes: {}\n", cl.episodes().size());
  return exit_status(r);
}

int cmd_bench(uint64_t seed, const std::string& out_path) {
  std::string csv = "kernel,tmr_cycles,performance_cycles,speedup,reboot_cycles\n";
  fmt::print("{:<10} {:>12} {:>18} {:>8} {:>14}\n", "kernel", "tmr cycles", "performance cycles",
             "speedup", "reboot cycles");
  int status = 0;
  for (KernelKind k : kAllKernels) {
    const BenchRow row = bench_kernel(k, seed);
    if (!row.passed) status = 1;
    fmt::print("{:<10} {:>12} {:>18} {:>7.2f}x {:>14}\n", kernel_name(k), row.tmr_cycles,
               row.performance_cycles, row.speedup(), row.reboot_cycles);
    csv += fmt::format("{},{},{},{:.4f},{}\n", kernel_name(k), row.tmr_cycles, row.performance_cycles,
                       row.speedup(), row.reboot_cycles);
  }
  if (!out_path.empty()) write_file(out_path, csv);
  return status;
}

int cmd_campaign(const std::string& config_path, const std::string& out_path,
                 const std::string& csv_path, const CLI::App& sub, const RunConfig& overrides,
                 unsigned jobs) {
  CampaignConfig cfg = parse_campaign_config(read_file(config_path));
  if (sub.count("--mode")) cfg.mode = parse_mode(overrides.mode);
  if (sub.count("--kernel")) {
    auto k = kernel_from_name(overrides.kernel);
    if (!k) throw UsageError("unknown kernel '" + overrides.kernel + "'");
    cfg.kernel = *k;
  }
  if (sub.count("--resync-delay")) cfg.resync_delay = overrides.resync_delay;
  if (sub.count("--seed")) {
    if (auto* r = std::get_if<RandomFaults>(&cfg.faults)) r->seed = overrides.seed;
  }
  if (sub.count("--jobs")) cfg.jobs = jobs;

  const CampaignReport rep = campaign(cfg);
  const std::string jsonl = report_jsonl(rep);
  const std::string csv = report_csv(rep);
  if (!out_path.empty()) write_file(out_path, jsonl);
  if (!csv_path.empty()) write_file(csv_path, csv);
  fmt::print("kernel {} mode {}: {} runs over a {}-cycle golden run\n", kernel_name(cfg.kernel),
             to_string(cfg.mode), rep.runs.size(), rep.golden_cycles);
  for (OutcomeClass c : {OutcomeClass::Masked, OutcomeClass::DetectedCorrected,
                         OutcomeClass::SilentDataCorruption, OutcomeClass::Hang})
    fmt::print("  {:<22} {}\n", to_string(c), rep.count(c));
  if (rep.resync_min)
    fmt::print("  resync cycles          min {} max {} mean {:.1f}\n", *rep.resync_min,
               *rep.resync_max, rep.resync_mean);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cycle-level simulator of a six-core RV32IM cluster with on-demand redundancy grouping"};
  app.require_subcommand(1);

  RunConfig rc;
  std::string config_path;
  auto add_run_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration (flags take precedence)");
    sub->add_option("--mode", rc.mode, "tmr or performance");
    sub->add_option("--kernel", rc.kernel, "conv16, matmul24 or matmul32");
    sub->add_option("--program", rc.program, "assembly source file");
    sub->add_option("--max-cycles", rc.max_cycles, "simulation limit");
    sub->add_option("--resync-delay", rc.resync_delay, "cycles between detection and resync");
    sub->add_option("--seed", rc.seed, "kernel input seed");
  };

  auto* run = app.add_subcommand("run", "boot the cluster and run one program");
  add_run_flags(run);
  run->add_option("--trace", rc.trace, "write an instruction trace to this file ('-' for stdout)");

  auto* trace = app.add_subcommand("trace", "run one program and emit its instruction trace");
  add_run_flags(trace);
  std::string trace_out;
  trace->add_option("--out", trace_out, "trace file (default stdout)");

  auto* bench = app.add_subcommand("bench", "run all kernels in both modes and report speedups");
  uint64_t bench_seed = 1;
  std::string bench_out;
  bench->add_option("--seed", bench_seed, "kernel input seed");
  bench->add_option("--out", bench_out, "CSV output file");

  auto* camp = app.add_subcommand("campaign", "run a fault-injection campaign");
  std::string camp_config, camp_out, camp_csv;
  unsigned jobs = 0;
  camp->add_option("--config", camp_config, "campaign configuration (JSON)")->required();
  camp->add_option("--out", camp_out, "line-delimited JSON report");
  camp->add_option("--csv", camp_csv, "CSV summary");
  camp->add_option("--mode", rc.mode, "override the configured mode");
  camp->add_option("--kernel", rc.kernel, "override the configured kernel");
  camp->add_option("--seed", rc.seed, "override the random fault seed");
  camp->add_option("--resync-delay", rc.resync_delay, "override the configured resync delay");
  camp->add_option("--jobs", jobs, "worker threads (0: one per hardware thread)");

  CLI11_PARSE(app, argc, argv);

  try {
    auto merged = [&](CLI::App* sub) {
      RunConfig base;
      if (!config_path.empty()) apply_run_config_file(base, config_path);
      for (const char* flag : {"--mode", "--kernel", "--program", "--max-cycles", "--resync-delay",
                               "--seed", "--trace"}) {
        if (!sub->get_option_no_throw(flag) || !sub->count(flag)) continue;
        const std::string f = flag;
        if (f == "--mode") base.mode = rc.mode;
        else if (f == "--kernel") base.kernel = rc.kernel;
        else if (f == "--program") base.program = rc.program;
        else if (f == "--max-cycles") base.max_cycles = rc.max_cycles;
        else if (f == "--resync-delay") base.resync_delay = rc.resync_delay;
        else if (f == "--seed") base.seed = rc.seed;
        else base.trace = rc.trace;
      }
      return base;
    };
    if (*run) return cmd_run(merged(run), false);
    if (*trace) {
      RunConfig t = merged(trace);
      t.trace = trace_out.empty() ? "-" : trace_out;
      return cmd_run(t, trace_out.empty());
    }
    if (*bench) return cmd_bench(bench_seed, bench_out);
    if (*camp) return cmd_campaign(camp_config, camp_out, camp_csv, *camp, rc, jobs);
  } catch (const UsageError& e) {
    fmt::print(stderr, "usage error: {}\n", e.what());
    return kExitUsage;
  } catch (const ConfigError& e) {
    fmt::print(stderr, "config error: {}\n", e.what());
    return kExitUsage;
  } catch (const AsmError& e) {
    fmt::print(stderr, "assembly error: {}\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
