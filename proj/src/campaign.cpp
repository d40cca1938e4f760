#include "odrg/campaign.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "json.hpp"
#include "odrg/error.hpp"
#include "odrg/isa.hpp"

namespace odrg {

namespace {

constexpr std::string_view kIfacePrefix = "iface:";

// Save-set CSRs that software can write; flips of mhartid would be no-ops.
std::vector<uint16_t> writable_csrs() {
  std::vector<uint16_t> v;
  for (uint16_t c : kSavedCsrs)
    if (c != csr::kMhartid) v.push_back(c);
  return v;
}

}  // namespace

std::string target_name(const FaultTarget& t) {
  if (const auto* g = std::get_if<GprTarget>(&t)) return fmt::format("x{}", g->index);
  if (std::holds_alternative<PcTarget>(t)) return "pc";
  if (const auto* c = std::get_if<CsrTarget>(&t)) {
    if (auto n = isa::csr_name(c->number)) return std::string(*n);
    return fmt::format("csr{:#x}", c->number);
  }
  return std::string(kIfacePrefix) + signal_name(std::get<SignalTarget>(t).signal);
}

std::optional<FaultTarget> target_from_name(std::string_view name) {
  if (name == "pc") return PcTarget{};
  if (name.substr(0, kIfacePrefix.size()) == kIfacePrefix) {
    if (auto s = signal_from_name(name.substr(kIfacePrefix.size()))) return SignalTarget{*s};
    return std::nullopt;
  }
  if (auto c = isa::csr_from_name(name)) return CsrTarget{*c};
  if (name.size() >= 2 && name[0] == 'x') {
    unsigned v = 0;
    for (char ch : name.substr(1)) {
      if (ch < '0' || ch > '9') return std::nullopt;
      v = v * 10 + static_cast<unsigned>(ch - '0');
      if (v > 31) return std::nullopt;
    }
    return GprTarget{v};
  }
  return std::nullopt;
}

void validate(const FaultSpec& f) {
  if (f.core >= kNumCores) throw InvalidFault(fmt::format("no core {}", f.core));
  if (const auto* g = std::get_if<GprTarget>(&f.target)) {
    if (g->index == 0 || g->index > 31)
      throw InvalidFault(fmt::format("x{} is not a fault target", g->index));
  } else if (const auto* c = std::get_if<CsrTarget>(&f.target)) {
    if (!csr_slot(c->number)) throw InvalidFault(fmt::format("CSR {:#x} is not modeled", c->number));
  } else if (const auto* s = std::get_if<SignalTarget>(&f.target)) {
    if (f.bit >= signal_width(s->signal))
      throw InvalidFault(fmt::format("bit {} out of range for {}", f.bit, signal_name(s->signal)));
    return;
  }
  if (f.bit > 31) throw InvalidFault(fmt::format("bit {} out of range", f.bit));
}

const char* to_string(OutcomeClass c) {
  switch (c) {
    case OutcomeClass::Masked: return "Masked";
    case OutcomeClass::DetectedCorrected: return "DetectedCorrected";
    case OutcomeClass::SilentDataCorruption: return "SilentDataCorruption";
    case OutcomeClass::Hang: return "Hang";
  }
  return "?";
}

const char* to_string(TargetClass t) {
  switch (t) {
    case TargetClass::Gpr: return "gpr";
    case TargetClass::Csr: return "csr";
    case TargetClass::Pc: return "pc";
    case TargetClass::Interface: return "interface";
  }
  return "?";
}

GoldenRef golden_run(const ProgramImage& image, Mode mode, const RunOptions& opts) {
  if (opts.checkpoint_interval == 0) throw ConfigError("checkpoint_interval must be positive");
  GoldenRef g;
  g.mode = mode;
  g.opts = opts;
  g.image = std::make_shared<const ProgramImage>(image);

  Cluster cl;
  g.reboot_cycles = cl.boot(mode, image, {std::nullopt, opts.resync_delay});
  while (!cl.state().halted() && cl.state().cycle < opts.max_cycles) {
    if (cl.state().cycle % opts.checkpoint_interval == 0) g.checkpoints.push_back(cl.state());
    cl.step();
  }
  if (!cl.state().halted())
    throw Timeout(fmt::format("no exit within {} cycles", opts.max_cycles));
  g.exit_code = *cl.state().exit_code;
  g.total_cycles = cl.state().cycle;
  g.final_tcdm = cl.state().tcdm.words;
  return g;
}

namespace {

bool tcdm_equal_outside(const std::vector<uint32_t>& a, const std::vector<uint32_t>& b,
                        const AddressRange& skip) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const uint32_t addr = map::kTcdmBase + static_cast<uint32_t>(4 * i);
    if (!skip.contains(addr) && a[i] != b[i]) return false;
  }
  return true;
}

void apply_register_fault(ClusterState& s, const FaultSpec& f) {
  CoreState& core = s.cores[f.core];
  std::visit(
      [&](const auto& t) {
        using T = std::decay_t<decltype(t)>;
        if constexpr (!std::is_same_v<T, SignalTarget>) core.arch = flip_bit(core.arch, t, f.bit);
      },
      f.target);
}

}  // namespace

OutcomeClass classify(const GoldenRef& golden, const FaultedRun& run) {
  if (run.timed_out) return OutcomeClass::Hang;
  const bool same = run.exit_code == golden.exit_code &&
                    tcdm_equal_outside(run.final_tcdm, golden.final_tcdm, golden.image->stack_region);
  if (!same) return OutcomeClass::SilentDataCorruption;
  return run.episodes.empty() ? OutcomeClass::Masked : OutcomeClass::DetectedCorrected;
}

FaultedRun simulate_fault(const GoldenRef& golden, const FaultSpec& fault, double timeout_factor) {
  validate(fault);
  if (fault.cycle >= golden.total_cycles)
    throw InvalidFault(fmt::format("injection cycle {} is beyond the golden run ({} cycles)",
                                   fault.cycle, golden.total_cycles));
  const uint64_t k = golden.opts.checkpoint_interval;
  const std::size_t start = std::min<std::size_t>(fault.cycle / k, golden.checkpoints.size() - 1);
  Cluster cl(golden.checkpoints[start]);
  while (cl.state().cycle < fault.cycle) cl.step();

  if (const auto* s = std::get_if<SignalTarget>(&fault.target))
    cl.inject_interface_fault(fault.cycle, {fault.core, s->signal, fault.bit});
  else
    apply_register_fault(cl.state(), fault);

  const auto limit = static_cast<uint64_t>(timeout_factor * static_cast<double>(golden.total_cycles));
  bool converged = false;
  while (!cl.state().halted() && cl.state().cycle < limit) {
    cl.step();
    const uint64_t c = cl.state().cycle;
    // Identical to the golden state: the rest of the run is the golden run.
    if (c % k == 0 && c / k < golden.checkpoints.size() && cl.state() == golden.checkpoints[c / k]) {
      converged = true;
      break;
    }
  }

  FaultedRun r;
  r.episodes = cl.episodes();
  r.mismatch_counts = cl.state().odrg[fault.core / kCoresPerGroup].mismatch_count;
  if (converged) {
    r.exit_code = golden.exit_code;
    r.total_cycles = golden.total_cycles;
    r.final_tcdm = golden.final_tcdm;
  } else {
    r.exit_code = cl.state().exit_code;
    r.timed_out = !cl.state().halted();
    r.total_cycles = cl.state().cycle;
    r.final_tcdm = cl.state().tcdm.words;
  }
  return r;
}

Outcome run_with_fault(const GoldenRef& golden, const FaultSpec& fault, double timeout_factor) {
  const FaultedRun r = simulate_fault(golden, fault, timeout_factor);
  Outcome o;
  o.cls = classify(golden, r);
  o.resync_episodes = static_cast<unsigned>(r.episodes.size());
  if (!r.episodes.empty()) o.resync_cycles = r.episodes.front().cycles();
  for (const auto& e : r.episodes) o.snapshots_equal = o.snapshots_equal && e.snapshots_equal;
  o.mismatch_counts = r.mismatch_counts;
  o.total_cycles = r.total_cycles;
  o.exit_code = r.exit_code;
  return o;
}

ResyncStats measure_resync(const GoldenRef& golden, const std::vector<uint64_t>& injection_cycles) {
  ResyncStats st;
  st.all_detected_corrected = !injection_cycles.empty();
  st.other_group_progressed = !injection_cycles.empty();
  uint64_t sum = 0;
  std::size_t n = 0;
  for (uint64_t c : injection_cycles) {
    const FaultSpec f{c, 1, SignalTarget{Signal::FetchAddr}, 2};
    const FaultedRun r = simulate_fault(golden, f, 4.0);
    ResyncSample s;
    s.injection_cycle = c;
    s.cls = classify(golden, r);
    if (!r.episodes.empty()) {
      const ResyncEpisode& e = r.episodes.front();
      s.resync_cycles = e.cycles();
      s.other_group_retired = e.other_group_retired;
      s.snapshots_equal = e.snapshots_equal;
      st.min = n == 0 ? e.cycles() : std::min(st.min, e.cycles());
      st.max = n == 0 ? e.cycles() : std::max(st.max, e.cycles());
      sum += e.cycles();
      ++n;
    }
    st.all_detected_corrected = st.all_detected_corrected && s.cls == OutcomeClass::DetectedCorrected;
    st.other_group_progressed = st.other_group_progressed && s.other_group_retired > 0;
    st.samples.push_back(s);
  }
  st.mean = n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0;
  return st;
}

// ---------------------------------------------------------------------------

std::vector<FaultSpec> sample_faults(const RandomFaults& r, uint64_t golden_cycles) {
  std::vector<FaultSpec> out;
  if (r.count == 0) return out;
  if (golden_cycles == 0) throw ConfigError("golden run has no cycles to inject into");
  if (r.targets.empty()) throw ConfigError("faults.random.targets: empty");
  const std::vector<uint16_t> csrs = writable_csrs();
  // Modulo mapping keeps the sample identical across standard libraries.
  std::mt19937_64 rng(r.seed);
  out.reserve(r.count);
  for (uint64_t i = 0; i < r.count; ++i) {
    FaultSpec f;
    f.cycle = rng() % golden_cycles;
    f.core = static_cast<unsigned>(rng() % kNumCores);
    switch (r.targets[rng() % r.targets.size()]) {
      case TargetClass::Gpr:
        f.target = GprTarget{static_cast<unsigned>(1 + rng() % 31)};
        f.bit = static_cast<unsigned>(rng() % 32);
        break;
      case TargetClass::Csr:
        f.target = CsrTarget{csrs[rng() % csrs.size()]};
        f.bit = static_cast<unsigned>(rng() % 32);
        break;
      case TargetClass::Pc:
        f.target = PcTarget{};
        f.bit = static_cast<unsigned>(rng() % 32);
        break;
      case TargetClass::Interface: {
        const auto sig = static_cast<Signal>(rng() % kNumSignals);
        f.target = SignalTarget{sig};
        f.bit = static_cast<unsigned>(rng() % signal_width(sig));
        break;
      }
    }
    out.push_back(f);
  }
  return out;
}

namespace {

using nlohmann::json;

[[noreturn]] void config_fail(const std::string& field, const std::string& what) {
  throw ConfigError(field + ": " + what);
}

uint64_t get_uint(const json& j, const std::string& field) {
  if (!j.is_number_unsigned()) config_fail(field, "expected a non-negative integer");
  return j.get<uint64_t>();
}

std::string get_string(const json& j, const std::string& field) {
  if (!j.is_string()) config_fail(field, "expected a string");
  return j.get<std::string>();
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& prefix) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      config_fail(prefix + key, "unknown field");
  }
}

}  // namespace

CampaignConfig parse_campaign_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) config_fail("config", "expected an object");
  reject_unknown(j, {"kernel", "mode", "kernel_seed", "faults", "timeout_factor", "resync_delay", "jobs"},
                 "");

  CampaignConfig cfg;
  if (!j.contains("kernel")) config_fail("kernel", "missing");
  {
    const std::string k = get_string(j["kernel"], "kernel");
    auto kind = kernel_from_name(k);
    if (!kind) config_fail("kernel", "unknown kernel '" + k + "' (conv16, matmul24, matmul32)");
    cfg.kernel = *kind;
  }
  if (!j.contains("mode")) config_fail("mode", "missing");
  {
    const std::string m = get_string(j["mode"], "mode");
    if (m == "tmr") cfg.mode = Mode::Tmr;
    else if (m == "performance") cfg.mode = Mode::Performance;
    else config_fail("mode", "expected 'tmr' or 'performance', got '" + m + "'");
  }
  if (j.contains("kernel_seed")) cfg.kernel_seed = get_uint(j["kernel_seed"], "kernel_seed");
  if (j.contains("timeout_factor")) {
    const json& t = j["timeout_factor"];
    if (!t.is_number() || t.get<double>() < 1.0) config_fail("timeout_factor", "expected a number >= 1");
    cfg.timeout_factor = t.get<double>();
  }
  if (j.contains("resync_delay")) {
    const uint64_t d = get_uint(j["resync_delay"], "resync_delay");
    if (d > 0xFFFF'FFFFu) config_fail("resync_delay", "does not fit 32 bits");
    cfg.resync_delay = static_cast<uint32_t>(d);
  }
  if (j.contains("jobs")) cfg.jobs = static_cast<unsigned>(get_uint(j["jobs"], "jobs"));

  if (!j.contains("faults")) config_fail("faults", "missing");
  const json& f = j["faults"];
  if (!f.is_object() || f.size() != 1 || !(f.contains("random") || f.contains("explicit")))
    config_fail("faults", "expected exactly one of 'random' or 'explicit'");
  if (f.contains("random")) {
    const json& r = f["random"];
    if (!r.is_object()) config_fail("faults.random", "expected an object");
    reject_unknown(r, {"count", "seed", "targets"}, "faults.random.");
    RandomFaults rf;
    if (!r.contains("count")) config_fail("faults.random.count", "missing");
    rf.count = get_uint(r["count"], "faults.random.count");
    if (r.contains("seed")) rf.seed = get_uint(r["seed"], "faults.random.seed");
    if (r.contains("targets")) {
      const json& t = r["targets"];
      if (!t.is_array() || t.empty()) config_fail("faults.random.targets", "expected a non-empty list");
      rf.targets.clear();
      for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string field = fmt::format("faults.random.targets[{}]", i);
        const std::string name = get_string(t[i], field);
        bool found = false;
        for (TargetClass c : {TargetClass::Gpr, TargetClass::Csr, TargetClass::Pc, TargetClass::Interface}) {
          if (name == to_string(c)) {
            rf.targets.push_back(c);
            found = true;
          }
        }
        if (!found) config_fail(field, "unknown target class '" + name + "' (gpr, csr, pc, interface)");
      }
    }
    cfg.faults = rf;
  } else {
    const json& list = f["explicit"];
    if (!list.is_array()) config_fail("faults.explicit", "expected a list");
    std::vector<FaultSpec> faults;
    for (std::size_t i = 0; i < list.size(); ++i) {
      const std::string prefix = fmt::format("faults.explicit[{}].", i);
      const json& e = list[i];
      if (!e.is_object()) config_fail(prefix.substr(0, prefix.size() - 1), "expected an object");
      reject_unknown(e, {"cycle", "core", "target", "bit"}, prefix);
      for (const char* key : {"cycle", "core", "target", "bit"})
        if (!e.contains(key)) config_fail(prefix + key, "missing");
      FaultSpec fs;
      fs.cycle = get_uint(e["cycle"], prefix + "cycle");
      fs.core = static_cast<unsigned>(get_uint(e["core"], prefix + "core"));
      const std::string tname = get_string(e["target"], prefix + "target");
      auto target = target_from_name(tname);
      if (!target) config_fail(prefix + "target", "unknown target '" + tname + "'");
      fs.target = *target;
      fs.bit = static_cast<unsigned>(get_uint(e["bit"], prefix + "bit"));
      try {
        validate(fs);
      } catch (const InvalidFault& err) {
        config_fail(prefix.substr(0, prefix.size() - 1), err.what());
      }
      faults.push_back(fs);
    }
    cfg.faults = std::move(faults);
  }
  return cfg;
}

BenchRow bench_kernel(KernelKind k, uint64_t seed, uint64_t max_cycles) {
  const ProgramImage img = gen_kernel({k, kMaxHarts, seed});
  BenchRow row;
  row.kernel = k;
  row.passed = true;
  for (Mode m : {Mode::Tmr, Mode::Performance}) {
    Cluster cl;
    row.reboot_cycles = std::max(row.reboot_cycles, cl.boot(m, img));
    const RunResult r = cl.run(max_cycles);
    if (r.timed_out || r.exit_code != 0u) row.passed = false;
    (m == Mode::Tmr ? row.tmr_cycles : row.performance_cycles) = r.cycles;
  }
  return row;
}

CampaignReport campaign(const CampaignConfig& cfg) {
  CampaignReport rep;
  rep.config = cfg;
  const ProgramImage image = gen_kernel({cfg.kernel, kMaxHarts, cfg.kernel_seed});
  RunOptions opts;
  opts.resync_delay = cfg.resync_delay;
  const GoldenRef golden = golden_run(image, cfg.mode, opts);
  rep.golden_cycles = golden.total_cycles;

  std::vector<FaultSpec> faults;
  if (const auto* r = std::get_if<RandomFaults>(&cfg.faults)) {
    faults = sample_faults(*r, golden.total_cycles);
  } else {
    faults = std::get<std::vector<FaultSpec>>(cfg.faults);
    for (std::size_t i = 0; i < faults.size(); ++i)
      if (faults[i].cycle >= golden.total_cycles)
        config_fail(fmt::format("faults.explicit[{}].cycle", i),
                    fmt::format("beyond the golden run ({} cycles)", golden.total_cycles));
  }

  rep.runs.resize(faults.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < faults.size();) {
      try {
        rep.runs[i] = RunRecord{i, faults[i], run_with_fault(golden, faults[i], cfg.timeout_factor)};
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!error) error = std::current_exception();
      }
    }
  };
  unsigned jobs = cfg.jobs ? cfg.jobs : std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, std::max<std::size_t>(faults.size(), 1)));
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  uint64_t sum = 0, n = 0;
  for (OutcomeClass c : {OutcomeClass::Masked, OutcomeClass::DetectedCorrected,
                         OutcomeClass::SilentDataCorruption, OutcomeClass::Hang})
    rep.counts[c] = 0;
  for (const RunRecord& r : rep.runs) {
    ++rep.counts[r.outcome.cls];
    rep.snapshots_equal = rep.snapshots_equal && r.outcome.snapshots_equal;
    if (!r.outcome.resync_cycles) continue;
    const uint64_t c = *r.outcome.resync_cycles;
    ++rep.resync_histogram[c / 10 * 10];
    rep.resync_min = rep.resync_min ? std::min(*rep.resync_min, c) : c;
    rep.resync_max = rep.resync_max ? std::max(*rep.resync_max, c) : c;
    sum += c;
    ++n;
  }
  rep.resync_mean = n ? static_cast<double>(sum) / static_cast<double>(n) : 0.0;
  return rep;
}

namespace {

nlohmann::ordered_json optional_json(const std::optional<uint64_t>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::string report_jsonl(const CampaignReport& r) {
  using oj = nlohmann::ordered_json;
  std::string out;
  for (const RunRecord& run : r.runs) {
    oj j;
    j["run"] = run.index;
    j["cycle"] = run.fault.cycle;
    j["core"] = run.fault.core;
    j["target"] = target_name(run.fault.target);
    j["bit"] = run.fault.bit;
    j["class"] = to_string(run.outcome.cls);
    j["resync_cycles"] = optional_json(run.outcome.resync_cycles);
    j["resync_episodes"] = run.outcome.resync_episodes;
    j["total_cycles"] = run.outcome.total_cycles;
    j["exit_code"] = run.outcome.exit_code ? oj(*run.outcome.exit_code) : oj(nullptr);
    j["mismatch_counts"] = run.outcome.mismatch_counts;
    out += j.dump();
    out += '\n';
  }
  oj s;
  s["kernel"] = kernel_name(r.config.kernel);
  s["mode"] = to_string(r.config.mode);
  s["runs"] = r.runs.size();
  s["golden_cycles"] = r.golden_cycles;
  s["masked"] = r.count(OutcomeClass::Masked);
  s["detected_corrected"] = r.count(OutcomeClass::DetectedCorrected);
  s["silent_data_corruption"] = r.count(OutcomeClass::SilentDataCorruption);
  s["hang"] = r.count(OutcomeClass::Hang);
  oj rs;
  rs["min"] = optional_json(r.resync_min);
  rs["max"] = optional_json(r.resync_max);
  rs["mean"] = r.resync_mean;
  oj hist = oj::object();
  for (const auto& [bucket, count] : r.resync_histogram) hist[std::to_string(bucket)] = count;
  rs["histogram"] = hist;
  s["resync_cycles"] = rs;
  s["post_resync_snapshots_equal"] = r.snapshots_equal;
  oj summary;
  summary["summary"] = s;
  out += summary.dump();
  out += '\n';
  return out;
}

std::string report_csv(const CampaignReport& r) {
  auto opt = [](const std::optional<uint64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  std::string out =
      "kernel,mode,runs,golden_cycles,masked,detected_corrected,silent_data_corruption,hang,"
      "resync_min,resync_max,resync_mean\n";
  out += fmt::format("{},{},{},{},{},{},{},{},{},{},{:.2f}\n", kernel_name(r.config.kernel),
                     to_string(r.config.mode), r.runs.size(), r.golden_cycles,
                     r.count(OutcomeClass::Masked), r.count(OutcomeClass::DetectedCorrected),
                     r.count(OutcomeClass::SilentDataCorruption), r.count(OutcomeClass::Hang),
                     opt(r.resync_min), opt(r.resync_max), r.resync_mean);
  return out;
}

}  // namespace odrg
