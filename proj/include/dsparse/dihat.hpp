#pragma once

// Distributed hard thresholding pursuit over a batch of per-node
// measurements. Each iteration:
//   1-2. average the measurement pairs (y, A) with the neighbors (W1),
//   3.   select the s largest entries of the gradient proxy,
//   4.   least squares restricted to that support,
//   5.   average the local estimates with the neighbors (W2),
//   6.   prune back to s entries.

#include "dsparse/linalg.hpp"
#include "dsparse/network.hpp"
#include "dsparse/scenario.hpp"
#include "dsparse/trace.hpp"

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dsparse {

enum class DihatVariant {
  kFull,            // exchange measurements and estimates
  kEstimateOnly,    // exchange estimates only
  kNonCooperative,  // no exchange
};

inline std::string to_string(DihatVariant v) {
  switch (v) {
    case DihatVariant::kFull: return "full";
    case DihatVariant::kEstimateOnly: return "estimate_only";
    case DihatVariant::kNonCooperative: return "non_cooperative";
  }
  return "?";
}

inline DihatVariant parse_dihat_variant(const std::string& s) {
  if (s == "full") return DihatVariant::kFull;
  if (s == "estimate_only") return DihatVariant::kEstimateOnly;
  if (s == "non_cooperative") return DihatVariant::kNonCooperative;
  throw ConfigError("unknown DiHaT variant '" + s + "'");
}

struct DihatConfig {
  Index s = 10;
  int max_iters = 300;
  /// Halt once ||H_n - H_{n-1}|| < tol ||H_{n-1}|| over the stacked network estimate.
  double rel_change_tol = 1e-8;
  DihatVariant variant = DihatVariant::kFull;
  /// Gradient step inside the support proxy.
  double proxy_step = 1.0;

  void validate() const {
    if (s < 1) throw ConfigError("DiHaT sparsity must be >= 1");
    if (max_iters < 1) throw ConfigError("DiHaT max_iters must be >= 1");
    if (!(rel_change_tol >= 0.0)) throw ConfigError("DiHaT tolerance must be >= 0");
    if (!(proxy_step > 0.0)) throw ConfigError("DiHaT proxy step must be > 0");
  }
};

struct DihatNodeState {
  Vector h;
  Vector y_bar;
  Matrix A_bar;
  SupportSet support;
};

inline std::vector<DihatNodeState> dihat_init(std::span<const NodeData> data) {
  if (data.empty()) throw DimensionError("DiHaT needs at least one node");
  const Index m = data[0].A.cols();
  const Index l = data[0].A.rows();
  std::vector<DihatNodeState> states;
  states.reserve(data.size());
  for (const auto& d : data) {
    if (d.A.cols() != m || d.A.rows() != l || d.y.size() != l) {
      throw DimensionError("all nodes must share l x m sensing matrices, got " +
                           detail::dims(d.A.rows(), d.A.cols()));
    }
    states.push_back({Vector::Zero(m), d.y, d.A, {}});
  }
  return states;
}

/// h + step * A_bar^T (y_bar - A_bar h).
inline Vector dihat_proxy(const DihatNodeState& st, double step = 1.0) {
  const Vector residual = st.y_bar - matvec(st.A_bar, st.h);
  return st.h + step * transpose_matvec(st.A_bar, residual);
}

/// Intermediate vectors of one iteration, kept for diagnostics.
struct DihatRound {
  std::vector<Vector> local;  // restricted LS estimates
  std::vector<Vector> fused;  // after estimate combination, before pruning
};

inline DihatRound dihat_iteration(std::vector<DihatNodeState>& states, const CombinationMatrix& w1,
                                  const CombinationMatrix& w2, const DihatConfig& cfg) {
  const Index n = static_cast<Index>(states.size());
  if (w1.size() != n || w2.size() != n) throw DimensionError("combination matrix size differs from node count");

  if (cfg.variant == DihatVariant::kFull) {
    RoundBuffer<Vector> ys(n);
    RoundBuffer<Matrix> as(n);
    for (Index k = 0; k < n; ++k) {
      ys.post(k, states[k].y_bar);
      as.post(k, states[k].A_bar);
    }
    ys.deliver();
    as.deliver();
    for (Index k = 0; k < n; ++k) {
      states[k].y_bar = ys.combine_for(k, w1);
      states[k].A_bar = as.combine_for(k, w1);
    }
  }

  DihatRound round;
  round.local.resize(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) {
    auto& st = states[k];
    const Vector proxy = dihat_proxy(st, cfg.proxy_step);
    st.support = hard_threshold(proxy, cfg.s).support;
    round.local[k] = restricted_least_squares(st.A_bar, st.y_bar, st.support);
    require_finite(round.local[k], "DiHaT local estimate");
  }

  if (cfg.variant == DihatVariant::kNonCooperative) {
    round.fused = round.local;
  } else {
    round.fused = synchronous_combine(round.local, w2);
  }
  for (Index k = 0; k < n; ++k) states[k].h = hard_threshold(round.fused[k], cfg.s).vector;
  return round;
}

/// (1/N) sum_k |h_k - h*|^2 / |h*|^2
inline double normalized_msd(std::span<const DihatNodeState> states, const Vector& h_star) {
  const double ref = h_star.squaredNorm();
  double acc = 0.0;
  for (const auto& st : states) acc += (st.h - h_star).squaredNorm();
  acc /= static_cast<double>(states.size());
  return ref > 0.0 ? acc / ref : acc;
}

struct DihatResult {
  std::vector<DihatNodeState> states;
  RunTrace trace;
  int iterations = 0;
  bool converged = false;  // halted on the relative-change test
};

using DihatObserver = std::function<void(int iteration, const std::vector<DihatNodeState>&, const DihatRound&)>;

inline DihatResult run_dihat(std::span<const NodeData> data, const CombinationMatrix& w1,
                             const CombinationMatrix& w2, const DihatConfig& cfg, const GroundTruth& truth,
                             const DihatObserver& observer = {}) {
  cfg.validate();
  DihatResult res;
  res.states = dihat_init(data);
  const Index m = res.states[0].h.size();
  if (truth.h_star.size() != m) throw DimensionError("ground truth dimension differs from sensing matrices");
  if (cfg.s > m) throw ConfigError("DiHaT sparsity exceeds dimension");
  const double truth_size = static_cast<double>(truth.support.size());

  std::vector<Vector> prev(res.states.size(), Vector::Zero(m));
  for (int it = 1; it <= cfg.max_iters; ++it) {
    const DihatRound round = dihat_iteration(res.states, w1, w2, cfg);
    if (observer) observer(it, res.states, round);

    res.trace.msd.push_back(normalized_msd(res.states, truth.h_star));
    std::vector<std::uint8_t> flags;
    double overlap = 0.0;
    double change = 0.0;
    double base = 0.0;
    for (std::size_t k = 0; k < res.states.size(); ++k) {
      const auto& st = res.states[k];
      flags.push_back(st.support == truth.support ? 1 : 0);
      overlap += truth_size > 0 ? static_cast<double>(st.support.overlap(truth.support)) / truth_size : 0.0;
      change += (st.h - prev[k]).squaredNorm();
      base += prev[k].squaredNorm();
      prev[k] = st.h;
    }
    res.trace.recovered.push_back(std::move(flags));
    res.trace.support_overlap.push_back(overlap / static_cast<double>(res.states.size()));
    res.iterations = it;
    if (base > 0.0 && std::sqrt(change) < cfg.rel_change_tol * std::sqrt(base)) {
      res.converged = true;
      break;
    }
  }
  return res;
}

}  // namespace dsparse
