#pragma once

// Monte-Carlo runner, trace averaging, variant comparison and file output.

#include "dsparse/config.hpp"
#include "dsparse/dihat.hpp"
#include "dsparse/greedi.hpp"
#include "dsparse/network.hpp"
#include "dsparse/rng.hpp"
#include "dsparse/scenario.hpp"
#include "dsparse/trace.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef DSPARSE_VERSION
#define DSPARSE_VERSION "0.1.0"
#endif

namespace dsparse {

inline constexpr std::string_view kVersion = DSPARSE_VERSION;

enum class Algorithm { kDihat, kGreedi };

inline std::string to_string(Algorithm a) { return a == Algorithm::kDihat ? "dihat" : "greedi"; }

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "dihat") return Algorithm::kDihat;
  if (s == "greedi") return Algorithm::kGreedi;
  throw ConfigError("unknown algorithm '" + s + "'");
}

enum class WeightRule { kMetropolis, kUniform };

inline CombinationMatrix build_weights(WeightRule r, const Topology& t) {
  return r == WeightRule::kMetropolis ? build_metropolis(t) : build_uniform(t);
}

struct ExperimentConfig {
  std::string name = "experiment";
  ScenarioConfig scenario;
  Algorithm algorithm = Algorithm::kDihat;
  WeightRule weights = WeightRule::kMetropolis;
  /// Sparsity the algorithm assumes; 0 means the scenario's s.
  Index algo_s = 0;
  DihatConfig dihat;
  GreediConfig greedi;
  bool centralized = false;  // greedi only
  bool auto_mu = true;       // greedi: mu from default_lms_step
  Index horizon = 2000;      // greedi
  int mc_runs = 100;
  std::uint64_t master_seed = 1;
  std::string output_dir = "out";
  int threads = 0;  // 0: hardware concurrency

  [[nodiscard]] Index sparsity() const { return algo_s > 0 ? algo_s : scenario.s; }

  [[nodiscard]] std::string variant() const {
    if (algorithm == Algorithm::kDihat) return to_string(dihat.variant);
    const std::string mode = to_string(greedi.proxy_mode);
    return centralized ? (greedi.proxy_mode == ProxyMode::kFull ? "centralized" : "centralized_light") : mode;
  }

  void set_variant(const std::string& v) {
    if (algorithm == Algorithm::kDihat) {
      dihat.variant = parse_dihat_variant(v);
      return;
    }
    if (v == "full" || v == "light") {
      greedi.proxy_mode = parse_proxy_mode(v);
      centralized = false;
    } else if (v == "centralized" || v == "centralized_light") {
      greedi.proxy_mode = v == "centralized" ? ProxyMode::kFull : ProxyMode::kLight;
      centralized = true;
    } else {
      throw ConfigError("unknown GreeDi variant '" + v + "'");
    }
  }

  /// Fills derived fields and checks everything.
  void finalize() {
    scenario.validate();
    if (mc_runs < 1) throw ConfigError("mc_runs must be >= 1");
    if (threads < 0) throw ConfigError("threads must be >= 0");
    if (sparsity() > scenario.m) throw ConfigError("algorithm sparsity exceeds m");
    dihat.s = sparsity();
    greedi.s = sparsity();
    if (auto_mu) greedi.mu = {default_lms_step(sparsity())};
    if (algorithm == Algorithm::kDihat) {
      dihat.validate();
    } else {
      if (horizon < 1) throw ConfigError("horizon must be >= 1");
      greedi.validate(scenario.n_nodes);
    }
  }

  void read(const KeyValues& kv) {
    std::set<std::string> known = ScenarioConfig::keys();
    for (const char* k : {"name", "algorithm", "variant", "weights", "algo_s", "mc_runs", "seed", "output_dir",
                          "threads", "max_iters", "tol", "proxy_step", "horizon", "mu", "zeta", "D",
                          "step_schedule", "mu_tilde", "diagnostics", "materialize_combined"}) {
      known.insert(k);
    }
    kv.require_known(known);
    scenario.read(kv);
    name = kv.get_string("name", name);
    algorithm = parse_algorithm(kv.get_string("algorithm", to_string(algorithm)));
    if (kv.has("variant")) set_variant(kv.get_string("variant", ""));
    const std::string w = kv.get_string("weights", weights == WeightRule::kMetropolis ? "metropolis" : "uniform");
    if (w == "metropolis") {
      weights = WeightRule::kMetropolis;
    } else if (w == "uniform") {
      weights = WeightRule::kUniform;
    } else {
      throw ConfigError("unknown weight rule '" + w + "'");
    }
    algo_s = kv.get_int("algo_s", algo_s);
    mc_runs = static_cast<int>(kv.get_int("mc_runs", mc_runs));
    master_seed = kv.get_u64("seed", master_seed);
    output_dir = kv.get_string("output_dir", output_dir);
    threads = static_cast<int>(kv.get_int("threads", threads));
    dihat.max_iters = static_cast<int>(kv.get_int("max_iters", dihat.max_iters));
    dihat.rel_change_tol = kv.get_double("tol", dihat.rel_change_tol);
    dihat.proxy_step = kv.get_double("proxy_step", dihat.proxy_step);
    horizon = kv.get_int("horizon", horizon);
    if (kv.has("mu")) {
      const std::string mu = kv.get_string("mu", "auto");
      if (mu == "auto") {
        auto_mu = true;
      } else {
        auto_mu = false;
        greedi.mu.clear();
        std::stringstream ss(mu);
        std::string item;
        while (std::getline(ss, item, ',')) greedi.mu.push_back(KeyValues::to_double("mu", detail::trim(item)));
      }
    }
    greedi.zeta = kv.get_double("zeta", greedi.zeta);
    greedi.D = kv.get_double("D", greedi.D);
    if (kv.has("step_schedule")) greedi.step_schedule = parse_step_schedule(kv.get_string("step_schedule", ""));
    greedi.mu_tilde = kv.get_double("mu_tilde", greedi.mu_tilde);
    greedi.diagnostics = kv.get_bool("diagnostics", greedi.diagnostics);
    greedi.materialize_combined = kv.get_bool("materialize_combined", greedi.materialize_combined);
    finalize();
  }

  /// Every key that affects results, in config-file form.
  void write(std::ostream& os) const {
    os << "name = " << name << "\n";
    scenario.write(os);
    os << "algorithm = " << to_string(algorithm) << "\n"
       << "variant = " << variant() << "\n"
       << "weights = " << (weights == WeightRule::kMetropolis ? "metropolis" : "uniform") << "\n"
       << "algo_s = " << sparsity() << "\n"
       << "mc_runs = " << mc_runs << "\n"
       << "seed = " << master_seed << "\n";
    if (algorithm == Algorithm::kDihat) {
      os << "max_iters = " << dihat.max_iters << "\n"
         << "tol = " << format_real(dihat.rel_change_tol) << "\n"
         << "proxy_step = " << format_real(dihat.proxy_step) << "\n";
    } else {
      os << "horizon = " << horizon << "\n";
      if (auto_mu) {
        os << "mu = auto\n";
      } else {
        os << "mu = ";
        for (std::size_t i = 0; i < greedi.mu.size(); ++i) os << (i ? "," : "") << format_real(greedi.mu[i]);
        os << "\n";
      }
      os << "zeta = " << format_real(greedi.zeta) << "\n"
         << "D = " << format_real(greedi.D) << "\n"
         << "step_schedule = " << to_string(greedi.step_schedule) << "\n"
         << "mu_tilde = " << format_real(greedi.mu_tilde) << "\n"
         << "diagnostics = " << (greedi.diagnostics ? "true" : "false") << "\n"
         << "materialize_combined = " << (greedi.materialize_combined ? "true" : "false") << "\n";
    }
  }

  [[nodiscard]] std::string text() const {
    std::ostringstream os;
    write(os);
    return os.str();
  }

  /// FNV-1a of the canonical text.
  [[nodiscard]] std::uint64_t hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text()) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    return h;
  }
};

// ---- presets ---------------------------------------------------------------

inline const std::map<std::string, std::string>& preset_table() {
  static const std::map<std::string, std::string> t{
      {"exp1",
       "name = exp1\nalgorithm = dihat\nvariant = full\nm = 70\nl = 55\nnodes = 20\ns = 10\nsnr_db = 20\n"
       "max_iters = 60\ntol = 0\nmc_runs = 100\n"},
      {"exp2",
       "name = exp2\nalgorithm = dihat\nvariant = full\nm = 70\nl = 55\nnodes = 20\ns = 20\nsnr_db = 20\n"
       "max_iters = 60\ntol = 0\nmc_runs = 100\n"},
      {"exp5-small-l",
       "name = exp5-small-l\nalgorithm = dihat\nvariant = full\nm = 70\nl = 15\nnodes = 20\ns = 10\n"
       "snr_db = 20\nmax_iters = 100\ntol = 0\nmc_runs = 100\n"},
      {"exp6",
       "name = exp6\nalgorithm = greedi\nvariant = full\nm = 100\nnodes = 10\ns = 10\nzeta = 1\n"
       "horizon = 2000\nmc_runs = 100\n"},
      {"exp7-tracking",
       "name = exp7-tracking\nalgorithm = greedi\nvariant = full\nm = 100\nnodes = 10\ns = 10\n"
       "switch_after = 1450\nswitch_s = 15\nalgo_s = 15\nzeta = 0.99\nhorizon = 3000\nmc_runs = 100\n"},
      {"exp8-light",
       "name = exp8-light\nalgorithm = greedi\nvariant = light\nm = 100\nnodes = 10\ns = 10\nzeta = 1\n"
       "horizon = 1000\nmc_runs = 100\n"},
  };
  return t;
}

inline KeyValues preset_keys(const std::string& name) {
  const auto& t = preset_table();
  auto it = t.find(name);
  if (it == t.end()) throw ConfigError("unknown preset '" + name + "'");
  return KeyValues::parse(it->second, "preset:" + name);
}

inline ExperimentConfig preset(const std::string& name) {
  ExperimentConfig cfg;
  cfg.read(preset_keys(name));
  return cfg;
}

// ---- Monte-Carlo runs --------------------------------------------------------

struct MsdTrace {
  std::vector<double> msd;
  std::vector<double> support_overlap;
  std::vector<double> normalized_branch;  // online only
  int runs = 0;
  // metadata
  std::string name;
  std::uint64_t config_hash = 0;
  std::uint64_t master_seed = 0;
  std::string version{kVersion};
  std::string rng{kRngAlgorithm};
  bool online = false;

  [[nodiscard]] std::size_t size() const noexcept { return msd.size(); }

  /// Mean over the last `fraction` of the trace (at least one point).
  [[nodiscard]] double final_window_mean(double fraction = 0.1) const {
    if (msd.empty()) throw std::logic_error("empty trace");
    const auto w = std::max<std::size_t>(1, static_cast<std::size_t>(fraction * static_cast<double>(msd.size())));
    double acc = 0.0;
    for (std::size_t i = msd.size() - w; i < msd.size(); ++i) acc += msd[i];
    return acc / static_cast<double>(w);
  }

  /// Mean of msd over 1-based indices [from, to].
  [[nodiscard]] double window_mean(std::size_t from, std::size_t to) const {
    if (from < 1 || to < from || to > msd.size()) throw std::out_of_range("bad trace window");
    double acc = 0.0;
    for (std::size_t i = from; i <= to; ++i) acc += msd[i - 1];
    return acc / static_cast<double>(to - from + 1);
  }
};

/// Everything one Monte-Carlo run leaves behind.
struct RunArtifact {
  int run = 0;
  RunTrace trace;
  std::vector<Vector> estimates;
  GroundTruth final_truth;
  int iterations = 0;
};

struct RunFailure : std::runtime_error {
  RunFailure(int run, std::uint64_t seed, const std::string& what, bool numerical)
      : std::runtime_error("run " + std::to_string(run) + " (master seed " + std::to_string(seed) + ") failed: " + what),
        run_index(run), master_seed(seed), numerical_failure(numerical) {}
  int run_index;
  std::uint64_t master_seed;
  bool numerical_failure;
};

/// Pointwise mean of traces, accumulated in run order.
inline MsdTrace average_traces(const std::vector<const RunTrace*>& traces) {
  MsdTrace out;
  if (traces.empty()) return out;
  const std::size_t len = traces[0]->msd.size();
  for (const auto* t : traces) {
    if (t->msd.size() != len) throw DimensionError("traces of different lengths cannot be averaged");
  }
  out.msd.assign(len, 0.0);
  out.support_overlap.assign(len, 0.0);
  const bool branch = !traces[0]->normalized_branch.empty();
  if (branch) out.normalized_branch.assign(len, 0.0);
  for (const auto* t : traces) {
    for (std::size_t i = 0; i < len; ++i) {
      out.msd[i] += t->msd[i];
      if (i < t->support_overlap.size()) out.support_overlap[i] += t->support_overlap[i];
      if (branch) out.normalized_branch[i] += t->normalized_branch[i];
    }
  }
  const double n = static_cast<double>(traces.size());
  for (std::size_t i = 0; i < len; ++i) {
    out.msd[i] /= n;
    out.support_overlap[i] /= n;
    if (branch) out.normalized_branch[i] /= n;
  }
  out.runs = static_cast<int>(traces.size());
  return out;
}

/// Merges two averages weighted by their run counts.
inline MsdTrace merge_averages(const MsdTrace& a, const MsdTrace& b) {
  if (a.msd.size() != b.msd.size()) throw DimensionError("cannot merge traces of different lengths");
  MsdTrace out = a;
  const double wa = a.runs, wb = b.runs, w = wa + wb;
  for (std::size_t i = 0; i < a.msd.size(); ++i) {
    out.msd[i] = (wa * a.msd[i] + wb * b.msd[i]) / w;
    if (i < a.support_overlap.size())
      out.support_overlap[i] = (wa * a.support_overlap[i] + wb * b.support_overlap[i]) / w;
    if (i < a.normalized_branch.size())
      out.normalized_branch[i] = (wa * a.normalized_branch[i] + wb * b.normalized_branch[i]) / w;
  }
  out.runs = a.runs + b.runs;
  return out;
}

/// One Monte-Carlo run of the configured algorithm.
inline RunArtifact run_single(const ExperimentConfig& cfg, const Topology& topo, int run) {
  const auto r = static_cast<std::uint64_t>(run);
  const CombinationMatrix w = build_weights(cfg.weights, topo);
  RunArtifact art;
  art.run = run;
  if (cfg.algorithm == Algorithm::kDihat) {
    GroundTruth truth = scenario_truth(cfg.scenario, cfg.master_seed, r);
    const auto data = gen_batch_data(truth, cfg.scenario.n_nodes, cfg.scenario.l, cfg.scenario.snr_db,
                                     cfg.master_seed, r);
    DihatResult res = run_dihat(data, w, w, cfg.dihat, truth);
    art.trace = std::move(res.trace);
    art.iterations = res.iterations;
    for (auto& st : res.states) art.estimates.push_back(std::move(st.h));
    art.final_truth = std::move(truth);
  } else {
    OnlineStreams streams(scenario_schedule(cfg.scenario, cfg.master_seed, r), cfg.scenario.n_nodes,
                          cfg.scenario.noise, cfg.master_seed, r);
    GreediResult res = cfg.centralized ? run_greedi_centralized(streams, cfg.greedi, cfg.horizon)
                                       : run_greedi(streams, w, w, cfg.greedi, cfg.horizon);
    art.trace = std::move(res.trace);
    art.iterations = static_cast<int>(cfg.horizon);
    art.estimates = std::move(res.estimates);
    art.final_truth = streams.truth_at(cfg.horizon);
  }
  return art;
}

struct ExperimentResult {
  MsdTrace trace;
  std::vector<RunArtifact> runs;  // traces dropped unless keep_run_traces
};

struct RunOptions {
  bool keep_run_traces = false;
};

inline ExperimentResult run_experiment(ExperimentConfig cfg, const RunOptions& opt = {}) {
  cfg.finalize();
  const Topology topo = make_topology(cfg.scenario.topology, cfg.scenario.n_nodes, cfg.master_seed);
  std::vector<RunArtifact> runs(static_cast<std::size_t>(cfg.mc_runs));
  std::vector<std::exception_ptr> errors(runs.size());
  std::atomic<int> next{0};

  const auto worker = [&] {
    for (int r = next++; r < cfg.mc_runs; r = next++) {
      try {
        runs[r] = run_single(cfg, topo, r);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    }
  };
  int threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  threads = std::min(threads, cfg.mc_runs);
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  for (std::size_t r = 0; r < errors.size(); ++r) {
    if (!errors[r]) continue;
    try {
      std::rethrow_exception(errors[r]);
    } catch (const NumericalError& e) {
      throw RunFailure(static_cast<int>(r), cfg.master_seed, e.what(), true);
    } catch (const std::exception& e) {
      throw RunFailure(static_cast<int>(r), cfg.master_seed, e.what(), false);
    }
  }

  std::vector<const RunTrace*> ptrs;
  for (const auto& a : runs) ptrs.push_back(&a.trace);
  ExperimentResult out;
  out.trace = average_traces(ptrs);
  out.trace.name = cfg.name;
  out.trace.config_hash = cfg.hash();
  out.trace.master_seed = cfg.master_seed;
  out.trace.online = cfg.algorithm == Algorithm::kGreedi;
  if (!opt.keep_run_traces) {
    for (auto& a : runs) {
      RunTrace slim;
      slim.last_support_mismatch = a.trace.last_support_mismatch;
      a.trace = std::move(slim);
    }
  }
  out.runs = std::move(runs);
  return out;
}

// ---- comparisons -------------------------------------------------------------

struct Comparison {
  std::vector<std::string> labels;
  std::vector<MsdTrace> traces;
  std::vector<double> final_means;
};

inline Comparison compare_variants(const std::vector<ExperimentConfig>& cfgs, double window = 0.1) {
  if (cfgs.empty()) throw ConfigError("nothing to compare");
  Comparison c;
  for (const auto& cfg : cfgs) {
    if (cfg.master_seed != cfgs[0].master_seed) throw ConfigError("compared configs must share the scenario seed");
    auto res = run_experiment(cfg);
    if (!c.traces.empty() && res.trace.size() != c.traces[0].size()) {
      throw ConfigError("compared configs have different horizons");
    }
    c.labels.push_back(cfg.name + ":" + cfg.variant());
    c.final_means.push_back(res.trace.final_window_mean(window));
    c.traces.push_back(std::move(res.trace));
  }
  return c;
}

inline void write_comparison_table(std::ostream& os, const Comparison& c) {
  os << "label,final_msd,final_msd_db\n";
  for (std::size_t i = 0; i < c.labels.size(); ++i) {
    os << c.labels[i] << "," << format_real(c.final_means[i]) << "," << format_db(c.final_means[i]) << "\n";
  }
}

// ---- output files ------------------------------------------------------------

/// iter,msd,msd_db[,support_overlap[,normalized_branch]]
inline void write_trace_csv(std::ostream& os, const MsdTrace& t) {
  const bool overlap = !t.support_overlap.empty();
  const bool branch = !t.normalized_branch.empty();
  os << (t.online ? "n" : "iter") << ",msd,msd_db" << (overlap ? ",support_overlap" : "")
     << (branch ? ",normalized_branch" : "") << "\n";
  for (std::size_t i = 0; i < t.msd.size(); ++i) {
    os << (i + 1) << "," << format_real(t.msd[i]) << "," << format_db(t.msd[i]);
    if (overlap) os << "," << format_real(t.support_overlap[i]);
    if (branch) os << "," << format_real(t.normalized_branch[i]);
    os << "\n";
  }
}

inline void write_metadata(std::ostream& os, const MsdTrace& t, const std::string& config_text) {
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(t.config_hash));
  os << "# " << t.name << "\n"
     << "version = " << t.version << "\n"
     << "rng = " << t.rng << "\n"
     << "config_hash = " << hash << "\n"
     << "master_seed = " << t.master_seed << "\n"
     << "runs = " << t.runs << "\n"
     << config_text;
}

inline std::string plot_script(const std::vector<std::string>& csv_files, const std::vector<std::string>& labels) {
  std::ostringstream os;
  os << "import csv\nimport matplotlib\nmatplotlib.use('Agg')\nimport matplotlib.pyplot as plt\n\n"
     << "series = [\n";
  for (std::size_t i = 0; i < csv_files.size(); ++i) {
    os << "    ('" << csv_files[i] << "', '" << labels[i] << "'),\n";
  }
  os << "]\n\nfig, ax = plt.subplots()\n"
     << "for path, label in series:\n"
     << "    with open(path) as f:\n"
     << "        rows = list(csv.DictReader(f))\n"
     << "    key = 'iter' if 'iter' in rows[0] else 'n'\n"
     << "    xs = [int(r[key]) for r in rows]\n"
     << "    ys = [float(r['msd_db']) for r in rows]\n"
     << "    ax.plot(xs, ys, label=label)\n"
     << "ax.set_xlabel(key)\nax.set_ylabel('MSD (dB)')\nax.grid(True)\nax.legend()\n"
     << "fig.savefig('msd.png', dpi=150)\n";
  return os.str();
}

/// Writes one CSV and one metadata file per trace plus plot_msd.py into dir.
/// Returns the CSV paths.
inline std::vector<std::string> emit_outputs(const std::vector<MsdTrace>& traces,
                                             const std::vector<std::string>& labels,
                                             const std::vector<std::string>& config_texts, const std::string& dir) {
  namespace fs = std::filesystem;
  if (traces.size() != labels.size() || traces.size() != config_texts.size()) {
    throw std::invalid_argument("emit_outputs: traces, labels and configs differ in count");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  const auto open = [](const fs::path& p) {
    std::ofstream os(p, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
    return os;
  };
  std::vector<std::string> files;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    std::string stem = labels[i];
    std::replace(stem.begin(), stem.end(), ':', '_');
    const fs::path csv = fs::path(dir) / (stem + ".csv");
    {
      auto os = open(csv);
      write_trace_csv(os, traces[i]);
      if (!os) throw std::runtime_error("write failed for '" + csv.string() + "'");
    }
    {
      auto os = open(fs::path(dir) / (stem + ".meta"));
      write_metadata(os, traces[i], config_texts[i]);
    }
    files.push_back(csv.filename().string());
  }
  auto os = open(fs::path(dir) / "plot_msd.py");
  os << plot_script(files, labels);
  return files;
}

}  // namespace dsparse
