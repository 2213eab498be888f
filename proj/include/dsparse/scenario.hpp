#pragma once

// Reproducible problem instances: sparse ground truth, batch sensing data at a
// target per-node SNR, and lazily generated regressor streams with optional
// ground-truth switches.

#include "dsparse/config.hpp"
#include "dsparse/linalg.hpp"
#include "dsparse/network.hpp"
#include "dsparse/rng.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace dsparse {

struct GroundTruth {
  Vector h_star;
  SupportSet support;
  Index s = 0;
};

/// Support uniform without replacement, nonzeros standard normal.
inline GroundTruth gen_ground_truth(Index m, Index s, Rng& rng) {
  if (s < 1 || s > m) {
    throw DimensionError("ground truth sparsity " + std::to_string(s) + " outside [1, " + std::to_string(m) + "]");
  }
  // partial Fisher-Yates
  std::vector<Index> pool(static_cast<std::size_t>(m));
  std::iota(pool.begin(), pool.end(), Index{0});
  for (Index i = 0; i < s; ++i) {
    const auto j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(m - i)));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(s));
  GroundTruth g;
  g.support = SupportSet(pool);
  g.s = s;
  g.h_star = Vector::Zero(m);
  for (Index i : g.support) {
    double v;
    do {
      v = rng.normal();
    } while (v == 0.0);
    g.h_star[i] = v;
  }
  return g;
}

/// One node's batch measurements y = A h* + noise.
struct NodeData {
  Matrix A;
  Vector y;
  Vector noise;
  double noise_var = 0.0;
};

inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

/// A_k entries i.i.d. N(0,1); noise variance set from the realized signal
/// power so that 10 log10(|A_k h*|^2 / (l sigma_k^2)) = snr_db exactly.
/// snr_db = +inf gives noiseless data.
inline std::vector<NodeData> gen_batch_data(const GroundTruth& truth, Index n_nodes, Index l, double snr_db,
                                            std::uint64_t master_seed, std::uint64_t run) {
  if (l < 1) throw DimensionError("batch data needs l >= 1");
  if (n_nodes < 1) throw DimensionError("batch data needs at least one node");
  const Index m = truth.h_star.size();
  std::vector<NodeData> out(static_cast<std::size_t>(n_nodes));
  for (Index k = 0; k < n_nodes; ++k) {
    NodeData& d = out[k];
    Rng sensing(master_seed, run, static_cast<std::uint64_t>(k), StreamRole::kSensing);
    Rng noise(master_seed, run, static_cast<std::uint64_t>(k), StreamRole::kBatchNoise);
    d.A.resize(l, m);
    for (Index i = 0; i < l; ++i)
      for (Index j = 0; j < m; ++j) d.A(i, j) = sensing.normal();
    const Vector signal = d.A * truth.h_star;
    d.noise = Vector::Zero(l);
    if (std::isfinite(snr_db)) {
      const double power = signal.squaredNorm() / static_cast<double>(l);
      d.noise_var = power / std::pow(10.0, snr_db / 10.0);
      const double sd = std::sqrt(d.noise_var);
      for (Index i = 0; i < l; ++i) d.noise[i] = sd * noise.normal();
    }
    d.y = signal + d.noise;
  }
  return out;
}

/// Ground truth active for samples n > after.
struct TruthSwitch {
  Index after = 0;
  GroundTruth truth;
};

class Schedule {
 public:
  explicit Schedule(GroundTruth initial) : initial_(std::move(initial)) {}

  void add_switch(Index after, GroundTruth truth) {
    if (!events_.empty() && after <= events_.back().after) {
      throw ConfigError("schedule switch times must be strictly increasing");
    }
    if (after < 0) throw ConfigError("schedule switch time must be nonnegative");
    if (truth.h_star.size() != initial_.h_star.size()) throw DimensionError("schedule truth dimension mismatch");
    events_.push_back({after, std::move(truth)});
  }

  /// Truth in force for sample n (n >= 1).
  [[nodiscard]] const GroundTruth& at(Index n) const {
    const GroundTruth* g = &initial_;
    for (const auto& e : events_) {
      if (n > e.after) g = &e.truth;
    }
    return *g;
  }

  [[nodiscard]] const GroundTruth& initial() const noexcept { return initial_; }
  [[nodiscard]] const std::vector<TruthSwitch>& switches() const noexcept { return events_; }
  [[nodiscard]] Index dimension() const noexcept { return initial_.h_star.size(); }

 private:
  GroundTruth initial_;
  std::vector<TruthSwitch> events_;
};

struct StreamSample {
  double y = 0.0;
  Vector a;
};

/// Per-node noise variance for the online model: base * eta_k with eta_k
/// uniform on [eta_lo, eta_hi], drawn once per run. base = 0 is noiseless.
struct StreamNoiseModel {
  double base = 0.01;
  double eta_lo = 0.5;
  double eta_hi = 1.0;

  static StreamNoiseModel none() { return {0.0, 1.0, 1.0}; }
};

/// Lazily generated white Gaussian regressor streams, one per node.
class OnlineStreams {
 public:
  OnlineStreams(Schedule schedule, Index n_nodes, StreamNoiseModel noise, std::uint64_t master_seed,
                std::uint64_t run, double regressor_var = 1.0)
      : schedule_(std::move(schedule)), noise_var_(static_cast<std::size_t>(n_nodes)),
        regressor_sd_(std::sqrt(regressor_var)) {
    if (n_nodes < 1) throw DimensionError("online streams need at least one node");
    for (Index k = 0; k < n_nodes; ++k) {
      Rng eta(master_seed, run, static_cast<std::uint64_t>(k), StreamRole::kNoiseVariance);
      noise_var_[k] = noise.base * eta.uniform(noise.eta_lo, noise.eta_hi);
      regressors_.emplace_back(master_seed, run, static_cast<std::uint64_t>(k), StreamRole::kRegressor);
      noises_.emplace_back(master_seed, run, static_cast<std::uint64_t>(k), StreamRole::kStreamNoise);
    }
    next_n_.assign(static_cast<std::size_t>(n_nodes), 1);
  }

  [[nodiscard]] Index nodes() const noexcept { return static_cast<Index>(noise_var_.size()); }
  [[nodiscard]] Index dimension() const noexcept { return schedule_.dimension(); }
  [[nodiscard]] double noise_var(Index k) const { return noise_var_[k]; }
  [[nodiscard]] const Schedule& schedule() const noexcept { return schedule_; }
  [[nodiscard]] const GroundTruth& truth_at(Index n) const { return schedule_.at(n); }

  /// Sample n of node k; each node must be read at n = 1, 2, ... in order.
  void draw(Index k, Index n, StreamSample& out) {
    if (n != next_n_[k]) {
      throw std::logic_error("stream of node " + std::to_string(k) + " read out of order");
    }
    ++next_n_[k];
    const Index m = dimension();
    out.a.resize(m);
    for (Index j = 0; j < m; ++j) out.a[j] = regressor_sd_ * regressors_[k].normal();
    const double v = noise_var_[k] > 0.0 ? std::sqrt(noise_var_[k]) * noises_[k].normal() : 0.0;
    out.y = out.a.dot(schedule_.at(n).h_star) + v;
    last_noise_ = v;
  }

  /// Noise term of the most recent draw.
  [[nodiscard]] double last_noise() const noexcept { return last_noise_; }

 private:
  Schedule schedule_;
  std::vector<double> noise_var_;
  std::vector<Rng> regressors_;
  std::vector<Rng> noises_;
  std::vector<Index> next_n_;
  double regressor_sd_;
  double last_noise_ = 0.0;
};

enum class TopologyKind { kGeometric, kComplete, kPath, kRing, kStar, kFile };

struct TopologySpec {
  TopologyKind kind = TopologyKind::kGeometric;
  double radius = 0.4;
  std::string file;
};

inline std::string to_string(TopologyKind k) {
  switch (k) {
    case TopologyKind::kGeometric: return "geometric";
    case TopologyKind::kComplete: return "complete";
    case TopologyKind::kPath: return "path";
    case TopologyKind::kRing: return "ring";
    case TopologyKind::kStar: return "star";
    case TopologyKind::kFile: return "file";
  }
  return "?";
}

inline TopologyKind parse_topology_kind(const std::string& s) {
  if (s == "geometric") return TopologyKind::kGeometric;
  if (s == "complete") return TopologyKind::kComplete;
  if (s == "path") return TopologyKind::kPath;
  if (s == "ring") return TopologyKind::kRing;
  if (s == "star") return TopologyKind::kStar;
  if (s == "file") return TopologyKind::kFile;
  throw ConfigError("unknown topology '" + s + "'");
}

inline Topology make_topology(const TopologySpec& spec, Index n_nodes, std::uint64_t master_seed) {
  switch (spec.kind) {
    case TopologyKind::kGeometric: {
      Rng rng(master_seed, 0, 0, StreamRole::kTopology);
      return Topology::random_geometric(n_nodes, spec.radius, rng);
    }
    case TopologyKind::kComplete: return Topology::complete(n_nodes);
    case TopologyKind::kPath: return Topology::path(n_nodes);
    case TopologyKind::kRing: return Topology::ring(n_nodes);
    case TopologyKind::kStar: return Topology::star(n_nodes);
    case TopologyKind::kFile: return Topology::load_edge_list(spec.file, n_nodes);
  }
  throw ConfigError("bad topology kind");
}

/// Everything needed to regenerate a problem instance.
struct ScenarioConfig {
  Index m = 70;
  Index l = 55;  // batch only
  Index n_nodes = 20;
  Index s = 10;  // nonzeros in the (initial) ground truth
  double snr_db = 20.0;  // batch; inf for noiseless
  StreamNoiseModel noise;  // online
  TopologySpec topology;
  std::optional<Index> switch_after;  // online: new truth for n > switch_after
  Index switch_s = 0;
  bool fixed_truth = false;  // same ground truth in every Monte-Carlo run

  void validate() const {
    if (m < 1 || n_nodes < 1 || l < 1) throw ConfigError("m, l and nodes must be positive");
    if (s < 1 || s > m) throw ConfigError("s must lie in [1, m]");
    if (switch_after && (switch_s < 1 || switch_s > m)) throw ConfigError("switch_s must lie in [1, m]");
    if (noise.base < 0 || noise.eta_lo > noise.eta_hi) throw ConfigError("bad noise model");
  }

  /// Writes the scenario keys in config-file form.
  void write(std::ostream& os) const {
    os << "m = " << m << "\n"
       << "l = " << l << "\n"
       << "nodes = " << n_nodes << "\n"
       << "s = " << s << "\n"
       << "snr_db = " << (std::isfinite(snr_db) ? std::to_string(snr_db) : std::string("inf")) << "\n"
       << "noise_base = " << noise.base << "\n"
       << "noise_eta_lo = " << noise.eta_lo << "\n"
       << "noise_eta_hi = " << noise.eta_hi << "\n"
       << "topology = " << to_string(topology.kind) << "\n"
       << "topology_radius = " << topology.radius << "\n";
    if (topology.kind == TopologyKind::kFile) os << "topology_file = " << topology.file << "\n";
    if (switch_after) os << "switch_after = " << *switch_after << "\nswitch_s = " << switch_s << "\n";
    os << "fixed_truth = " << (fixed_truth ? "true" : "false") << "\n";
  }

  void read(const KeyValues& kv) {
    m = kv.get_int("m", m);
    l = kv.get_int("l", l);
    n_nodes = kv.get_int("nodes", n_nodes);
    s = kv.get_int("s", s);
    snr_db = kv.get_double("snr_db", snr_db);
    noise.base = kv.get_double("noise_base", noise.base);
    noise.eta_lo = kv.get_double("noise_eta_lo", noise.eta_lo);
    noise.eta_hi = kv.get_double("noise_eta_hi", noise.eta_hi);
    if (kv.has("topology")) topology.kind = parse_topology_kind(kv.get_string("topology", ""));
    topology.radius = kv.get_double("topology_radius", topology.radius);
    topology.file = kv.get_string("topology_file", topology.file);
    if (kv.has("switch_after")) {
      switch_after = kv.get_int("switch_after", 0);
      switch_s = kv.get_int("switch_s", s);
    }
    fixed_truth = kv.get_bool("fixed_truth", fixed_truth);
    validate();
  }

  static const std::set<std::string>& keys() {
    static const std::set<std::string> k{"m",          "l",           "nodes",        "s",
                                         "snr_db",     "noise_base",  "noise_eta_lo", "noise_eta_hi",
                                         "topology",   "topology_radius", "topology_file",
                                         "switch_after", "switch_s",  "fixed_truth"};
    return k;
  }
};

/// Ground truth for one Monte-Carlo run.
inline GroundTruth scenario_truth(const ScenarioConfig& sc, std::uint64_t master_seed, std::uint64_t run,
                                  Index s_override = 0) {
  Rng rng(master_seed, sc.fixed_truth ? 0 : run, 0, StreamRole::kTruth);
  return gen_ground_truth(sc.m, s_override > 0 ? s_override : sc.s, rng);
}

inline Schedule scenario_schedule(const ScenarioConfig& sc, std::uint64_t master_seed, std::uint64_t run) {
  Schedule sched(scenario_truth(sc, master_seed, run));
  if (sc.switch_after) {
    Rng rng(master_seed, sc.fixed_truth ? 0 : run, 1, StreamRole::kTruth);
    sched.add_switch(*sc.switch_after, gen_ground_truth(sc.m, sc.switch_s, rng));
  }
  return sched;
}

/// node,row,y,noise,a_0..a_{m-1}
inline void dump_batch_csv(const std::vector<NodeData>& data, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os.precision(17);
  if (data.empty()) return;
  os << "node,row,y,noise";
  for (Index j = 0; j < data[0].A.cols(); ++j) os << ",a_" << j;
  os << "\n";
  for (std::size_t k = 0; k < data.size(); ++k) {
    for (Index i = 0; i < data[k].A.rows(); ++i) {
      os << k << "," << i << "," << data[k].y[i] << "," << data[k].noise[i];
      for (Index j = 0; j < data[k].A.cols(); ++j) os << "," << data[k].A(i, j);
      os << "\n";
    }
  }
}

inline void dump_truth_csv(const GroundTruth& g, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path + "'");
  os.precision(17);
  os << "index,value\n";
  for (Index i = 0; i < g.h_star.size(); ++i) os << i << "," << g.h_star[i] << "\n";
}

}  // namespace dsparse
