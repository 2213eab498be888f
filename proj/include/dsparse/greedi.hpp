#pragma once

// Greedy diffusion LMS. At every time instant each node
//   1-4. updates and combines its exponentially weighted correlations,
//   5-6. picks the s largest entries of the proxy h + mu~ (p_bar - R_bar h)
//        (h is normalized first when |h| > D),
//   7.   runs one LMS step restricted to that support,
//   8-9. averages the neighbors' intermediate estimates and prunes to s.
//
// The "light" proxy replaces p_bar - R_bar h with a recursively accumulated
// gradient, which drops the m x m autocorrelation entirely.

#include "dsparse/linalg.hpp"
#include "dsparse/network.hpp"
#include "dsparse/scenario.hpp"
#include "dsparse/trace.hpp"

#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dsparse {

enum class ProxyMode { kFull, kLight };
enum class StepSchedule { kFixed, kLemma1 };

inline std::string to_string(ProxyMode p) { return p == ProxyMode::kFull ? "full" : "light"; }
inline std::string to_string(StepSchedule s) { return s == StepSchedule::kFixed ? "fixed" : "lemma1"; }

inline ProxyMode parse_proxy_mode(const std::string& s) {
  if (s == "full") return ProxyMode::kFull;
  if (s == "light") return ProxyMode::kLight;
  throw ConfigError("unknown proxy mode '" + s + "'");
}

inline StepSchedule parse_step_schedule(const std::string& s) {
  if (s == "fixed") return StepSchedule::kFixed;
  if (s == "lemma1" || s == "adaptive") return StepSchedule::kLemma1;
  throw ConfigError("unknown step schedule '" + s + "'");
}

/// LMS step with mu * s * E|a_i|^2 = 1/2, well inside 0 < mu < 2 / lambda_max.
inline double default_lms_step(Index s, double regressor_var = 1.0) {
  return 0.5 / (static_cast<double>(s) * regressor_var);
}

struct GreediConfig {
  Index s = 10;
  /// Per-node LMS steps; a single entry applies to every node.
  std::vector<double> mu{0.05};
  double zeta = 1.0;
  double D = 100.0;
  ProxyMode proxy_mode = ProxyMode::kFull;
  StepSchedule step_schedule = StepSchedule::kLemma1;
  /// Proxy step when step_schedule is kFixed.
  double mu_tilde = 1.0;
  /// Form R_bar explicitly instead of applying the neighbors' R to h.
  bool materialize_combined = false;
  /// Record the noise-aggregate and Wiener-error terms of the steady-state bound.
  bool diagnostics = false;

  [[nodiscard]] double mu_for(Index k) const { return mu.size() == 1 ? mu[0] : mu[static_cast<std::size_t>(k)]; }

  void validate(Index n_nodes) const {
    if (s < 1) throw ConfigError("GreeDi sparsity must be >= 1");
    if (!(zeta > 0.0 && zeta <= 1.0)) throw ConfigError("forgetting factor must lie in (0, 1]");
    if (!(D > 0.0)) throw ConfigError("proxy threshold D must be > 0");
    if (mu.empty() || (mu.size() != 1 && static_cast<Index>(mu.size()) != n_nodes)) {
      throw ConfigError("need one LMS step size or one per node");
    }
    for (double v : mu)
      if (!(v >= 0.0)) throw ConfigError("LMS step sizes must be >= 0");
    if (step_schedule == StepSchedule::kFixed && !(mu_tilde > 0.0)) throw ConfigError("mu_tilde must be > 0");
  }
};

/// p(n) = (n/(n+1)) zeta p(n-1) + a y / (n+1), and the same recursion for
/// R with a a^T. R is kept as scale * Q with only the lower triangle of Q
/// stored, so an update costs one symmetric rank-one product.
class CorrelationAccumulator {
 public:
  CorrelationAccumulator() = default;
  explicit CorrelationAccumulator(Index m) : p_(Vector::Zero(m)), q_(Matrix::Zero(m, m)) {}

  [[nodiscard]] Index dimension() const noexcept { return p_.size(); }

  void update(const Vector& a, double y, double zeta, Index n) {
    const double decay = begin_step(zeta, n);
    p_ = decay * p_ + a * (y / static_cast<double>(n + 1));
    const double w = 1.0 / (static_cast<double>(n + 1) * scale_);
    q_.selfadjointView<Eigen::Lower>().rankUpdate(a, w);
    trace_q_ += w * a.squaredNorm();
    end_step();
  }

  /// One step whose input is the average of several samples.
  void update_mean(std::span<const StreamSample> samples, double zeta, Index n) {
    const double decay = begin_step(zeta, n);
    const double inv = 1.0 / static_cast<double>(samples.size());
    p_ *= decay;
    const double w = inv / (static_cast<double>(n + 1) * scale_);
    for (const auto& smp : samples) {
      p_ += smp.a * (smp.y * inv / static_cast<double>(n + 1));
      q_.selfadjointView<Eigen::Lower>().rankUpdate(smp.a, w);
      trace_q_ += w * smp.a.squaredNorm();
    }
    end_step();
  }

  [[nodiscard]] const Vector& p() const noexcept { return p_; }

  [[nodiscard]] Matrix R() const {
    Matrix r = q_.selfadjointView<Eigen::Lower>();
    return scale_ * r;
  }

  [[nodiscard]] double trace() const noexcept { return scale_ * trace_q_; }

  /// R x, touching only the columns in x's support.
  [[nodiscard]] Vector apply(const Vector& x, const SupportSet& support) const {
    const Index m = dimension();
    Vector out = Vector::Zero(m);
    for (Index j : support) {
      const double xj = x[j];
      if (xj == 0.0) continue;
      // column j of the symmetric matrix: row j left of the diagonal, then column j below it
      for (Index i = 0; i < j; ++i) out[i] += q_(j, i) * xj;
      out.segment(j, m - j).noalias() += q_.col(j).segment(j, m - j) * xj;
    }
    return scale_ * out;
  }

 private:
  double begin_step(double zeta, Index n) {
    if (n < 1) throw std::invalid_argument("correlation time index must be >= 1");
    const double decay = static_cast<double>(n) / static_cast<double>(n + 1) * zeta;
    scale_ *= decay;
    if (scale_ == 0.0) {
      q_.setZero();
      trace_q_ = 0.0;
      scale_ = 1.0;
    }
    return decay;
  }

  void end_step() {
    if (scale_ < 1e-150) {
      q_.triangularView<Eigen::Lower>() *= scale_;
      trace_q_ *= scale_;
      scale_ = 1.0;
    }
  }

  Vector p_;
  Matrix q_;
  double scale_ = 1.0;
  double trace_q_ = 0.0;
};

struct GreediNodeState {
  Vector h;
  CorrelationAccumulator corr;
  Vector p_bar;
  Matrix R_bar;  // empty unless combined explicitly
  SupportSet support;
  Vector g;                  // light proxy gradient accumulator
  double light_power = 0.0;  // zeta-weighted |a|^2 / m, same scale as g
  bool normalized = false;   // last proxy used h / |h|

  explicit GreediNodeState(Index m)
      : h(Vector::Zero(m)), corr(m), p_bar(Vector::Zero(m)), g(Vector::Zero(m)) {}
};

inline void update_correlations(GreediNodeState& st, const StreamSample& smp, double zeta, Index n) {
  st.corr.update(smp.a, smp.y, zeta, n);
}

/// Fills p_bar and an explicit R_bar for every node.
inline void combine_correlations(std::vector<GreediNodeState>& states, const CombinationMatrix& w) {
  std::vector<Vector> ps;
  std::vector<Matrix> rs;
  for (const auto& st : states) {
    ps.push_back(st.corr.p());
    rs.push_back(st.corr.R());
  }
  auto pb = synchronous_combine(ps, w);
  auto rb = synchronous_combine(rs, w);
  for (std::size_t k = 0; k < states.size(); ++k) {
    states[k].p_bar = std::move(pb[k]);
    states[k].R_bar = std::move(rb[k]);
  }
}

inline constexpr double kColdStartPower = 1e-12;

/// mu~_k = 1 / nu~_k, nu~_k = sum_l b(l,k) trace(R_l) / m. Falls back to 1
/// while the accumulators are still empty.
inline std::vector<double> lemma1_step_size(std::span<const double> node_power, const CombinationMatrix& w) {
  std::vector<double> out(node_power.size(), 1.0);
  for (Index k = 0; k < w.size(); ++k) {
    double nu = 0.0;
    for (const auto& term : w.column(k)) nu += term.weight * node_power[term.from];
    out[k] = nu < kColdStartPower ? 1.0 : 1.0 / nu;
  }
  return out;
}

inline std::vector<double> lemma1_step_size(const std::vector<GreediNodeState>& states, const CombinationMatrix& w,
                                            ProxyMode mode = ProxyMode::kFull) {
  std::vector<double> power;
  for (const auto& st : states) {
    power.push_back(mode == ProxyMode::kFull ? st.corr.trace() / static_cast<double>(st.h.size())
                                             : st.light_power);
  }
  return lemma1_step_size(std::span<const double>(power), w);
}

struct ProxySelection {
  SupportSet support;
  Vector proxy;
  bool normalized = false;
};

/// h when |h| <= D, else h / |h|.
inline Vector proxy_input(const Vector& h, double D, bool& normalized) {
  const double norm = h.norm();
  normalized = norm > D;
  return normalized ? Vector(h / norm) : h;
}

/// supp_s(x + mu~ (p_bar - R_bar x)) with x the (possibly normalized) estimate.
template <typename ApplyRbar>
ProxySelection greedi_proxy_support_with(const Vector& h, const Vector& p_bar, ApplyRbar&& apply_rbar, double mu_tilde,
                                    double D, Index s) {
  ProxySelection sel;
  const Vector x = proxy_input(h, D, sel.normalized);
  sel.proxy = x + mu_tilde * (p_bar - apply_rbar(x));
  sel.support = hard_threshold(sel.proxy, s).support;
  return sel;
}

inline ProxySelection greedi_proxy_support(const Vector& h, const Vector& p_bar, const Matrix& r_bar,
                                           double mu_tilde, double D, Index s) {
  if (r_bar.rows() != h.size() || r_bar.cols() != h.size() || p_bar.size() != h.size()) {
    throw DimensionError("proxy operands do not conform");
  }
  return greedi_proxy_support_with(
      h, p_bar, [&r_bar](const Vector& x) { return Vector(r_bar * x); }, mu_tilde, D, s);
}

/// supp_s(x + mu~ g_bar) for the light proxy.
inline ProxySelection light_proxy_support(const Vector& h, const Vector& g_bar, double mu_tilde, double D, Index s) {
  ProxySelection sel;
  const Vector x = proxy_input(h, D, sel.normalized);
  sel.proxy = x + mu_tilde * g_bar;
  sel.support = hard_threshold(sel.proxy, s).support;
  return sel;
}

/// g(n) = zeta g(n-1) + a (y - a^T h_prev).
inline Vector light_proxy_update(const Vector& g, const StreamSample& smp, const Vector& h_prev, double zeta) {
  return zeta * g + smp.a * (smp.y - smp.a.dot(h_prev));
}

/// One LMS step on the support; zero elsewhere.
inline Vector restricted_lms_adapt(const Vector& h, const StreamSample& smp, const SupportSet& support, double mu) {
  if (smp.a.size() != h.size()) throw DimensionError("regressor length differs from estimate length");
  support.check_bounds(h.size());
  double err = smp.y;
  for (Index i : support) err -= smp.a[i] * h[i];
  Vector psi = Vector::Zero(h.size());
  for (Index i : support) psi[i] = h[i] + mu * smp.a[i] * err;
  return psi;
}

inline std::vector<Vector> combine_and_prune(const std::vector<Vector>& psi, const CombinationMatrix& w, Index s) {
  std::vector<Vector> fused = synchronous_combine(psi, w);
  for (auto& v : fused) v = hard_threshold(v, s).vector;
  return fused;
}

struct GreediResult {
  std::vector<Vector> estimates;  // h_k at the horizon
  RunTrace trace;
  /// Network means of |p_bar_k - R_bar_k h*| and |y_k - a_k^T h*| (diagnostics only).
  std::vector<double> noise_aggregate;
  std::vector<double> wiener_error;
};

using GreediObserver = std::function<void(Index n, const std::vector<GreediNodeState>&)>;

namespace detail {
inline void record_online(RunTrace& trace, Index n, std::span<const Vector> estimates,
                          std::span<const SupportSet> supports, std::size_t normalized_count,
                          const GroundTruth& truth) {
  const double nodes = static_cast<double>(estimates.size());
  double msd = 0.0;
  for (const auto& h : estimates) msd += (h - truth.h_star).squaredNorm();
  double overlap = 0.0;
  bool mismatch = false;
  for (const auto& s : supports) {
    overlap += static_cast<double>(s.overlap(truth.support)) / static_cast<double>(truth.support.size());
    mismatch = mismatch || !(s == truth.support);
  }
  trace.msd.push_back(msd / nodes);
  trace.support_overlap.push_back(overlap / static_cast<double>(supports.size()));
  trace.normalized_branch.push_back(static_cast<double>(normalized_count) / static_cast<double>(supports.size()));
  if (mismatch) trace.last_support_mismatch = n;
}
}  // namespace detail

/// Runs the diffusion algorithm for `horizon` instants. w_b combines the
/// correlations, w_c the intermediate estimates.
inline GreediResult run_greedi(OnlineStreams& streams, const CombinationMatrix& w_b, const CombinationMatrix& w_c,
                               const GreediConfig& cfg, Index horizon, const GreediObserver& observer = {}) {
  const Index nodes = streams.nodes();
  const Index m = streams.dimension();
  cfg.validate(nodes);
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (w_b.size() != nodes || w_c.size() != nodes) throw DimensionError("combination matrix size differs from node count");
  if (cfg.s > m) throw ConfigError("GreeDi sparsity exceeds dimension");

  std::vector<GreediNodeState> states(static_cast<std::size_t>(nodes), GreediNodeState(m));
  std::vector<StreamSample> samples(static_cast<std::size_t>(nodes));
  std::vector<Vector> psi(static_cast<std::size_t>(nodes));
  std::vector<SupportSet> supports(static_cast<std::size_t>(nodes));
  std::vector<double> mu_tilde(static_cast<std::size_t>(nodes), cfg.mu_tilde);
  std::vector<Vector> g_snapshot(static_cast<std::size_t>(nodes));
  std::vector<Vector> estimates(static_cast<std::size_t>(nodes));
  GreediResult res;
  const double inv_m = 1.0 / static_cast<double>(m);

  for (Index n = 1; n <= horizon; ++n) {
    std::vector<double> noise(static_cast<std::size_t>(nodes), 0.0);
    for (Index k = 0; k < nodes; ++k) {
      streams.draw(k, n, samples[k]);
      noise[k] = streams.last_noise();
    }
    const GroundTruth& truth = streams.truth_at(n);

    for (Index k = 0; k < nodes; ++k) {
      auto& st = states[k];
      if (cfg.proxy_mode == ProxyMode::kFull) {
        update_correlations(st, samples[k], cfg.zeta, n);
      } else {
        st.g = light_proxy_update(st.g, samples[k], st.h, cfg.zeta);
        st.light_power = cfg.zeta * st.light_power + samples[k].a.squaredNorm() * inv_m;
      }
    }
    if (cfg.step_schedule == StepSchedule::kLemma1) mu_tilde = lemma1_step_size(states, w_b, cfg.proxy_mode);

    if (cfg.proxy_mode == ProxyMode::kFull) {
      if (cfg.materialize_combined) {
        combine_correlations(states, w_b);
      } else {
        for (Index k = 0; k < nodes; ++k) {
          Vector pb = Vector::Zero(m);
          for (const auto& term : w_b.column(k)) pb += term.weight * states[term.from].corr.p();
          states[k].p_bar = std::move(pb);
        }
      }
    } else {
      for (Index k = 0; k < nodes; ++k) g_snapshot[k] = states[k].g;
    }

    std::size_t normalized_count = 0;
    for (Index k = 0; k < nodes; ++k) {
      auto& st = states[k];
      ProxySelection sel;
      if (cfg.proxy_mode == ProxyMode::kFull) {
        if (cfg.materialize_combined) {
          sel = greedi_proxy_support(st.h, st.p_bar, st.R_bar, mu_tilde[k], cfg.D, cfg.s);
        } else {
          const auto apply = [&](const Vector& x) {
            const SupportSet sx = support_of(x);
            Vector acc = Vector::Zero(m);
            for (const auto& term : w_b.column(k)) acc += term.weight * states[term.from].corr.apply(x, sx);
            return acc;
          };
          sel = greedi_proxy_support_with(st.h, st.p_bar, apply, mu_tilde[k], cfg.D, cfg.s);
        }
      } else {
        Vector gb = Vector::Zero(m);
        for (const auto& term : w_b.column(k)) gb += term.weight * g_snapshot[term.from];
        sel = light_proxy_support(st.h, gb, mu_tilde[k], cfg.D, cfg.s);
      }
      st.support = sel.support;
      st.normalized = sel.normalized;
      normalized_count += sel.normalized ? 1 : 0;
      supports[k] = sel.support;
      psi[k] = restricted_lms_adapt(st.h, samples[k], st.support, cfg.mu_for(k));
    }

    if (cfg.diagnostics && cfg.proxy_mode == ProxyMode::kFull) {
      double agg = 0.0;
      double wiener = 0.0;
      for (Index k = 0; k < nodes; ++k) {
        Vector rh = Vector::Zero(m);
        for (const auto& term : w_b.column(k)) rh += term.weight * states[term.from].corr.apply(truth.h_star, truth.support);
        agg += (states[k].p_bar - rh).norm();
        wiener += std::abs(noise[k]);
      }
      res.noise_aggregate.push_back(agg / static_cast<double>(nodes));
      res.wiener_error.push_back(wiener / static_cast<double>(nodes));
    }

    auto fused = combine_and_prune(psi, w_c, cfg.s);
    for (Index k = 0; k < nodes; ++k) {
      if (!fused[k].allFinite()) {
        throw NumericalError("non-finite GreeDi estimate at node " + std::to_string(k) + ", n = " + std::to_string(n));
      }
      states[k].h = std::move(fused[k]);
      estimates[k] = states[k].h;
    }
    detail::record_online(res.trace, n, estimates, supports, normalized_count, truth);
    if (observer) observer(n, states);
  }
  res.estimates = std::move(estimates);
  return res;
}

/// Fusion-center reference: correlations and the LMS gradient are averaged
/// over all nodes' samples at each instant. Every node holds the center's
/// estimate, so the MSD is |h - h*|^2.
inline GreediResult run_greedi_centralized(OnlineStreams& streams, const GreediConfig& cfg, Index horizon) {
  const Index nodes = streams.nodes();
  const Index m = streams.dimension();
  cfg.validate(nodes);
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (cfg.s > m) throw ConfigError("GreeDi sparsity exceeds dimension");

  double mu = 0.0;
  for (Index k = 0; k < nodes; ++k) mu += cfg.mu_for(k);
  mu /= static_cast<double>(nodes);

  GreediNodeState st(m);
  std::vector<StreamSample> samples(static_cast<std::size_t>(nodes));
  const double inv_n = 1.0 / static_cast<double>(nodes);
  const double inv_m = 1.0 / static_cast<double>(m);
  GreediResult res;

  for (Index n = 1; n <= horizon; ++n) {
    for (Index k = 0; k < nodes; ++k) streams.draw(k, n, samples[k]);
    const GroundTruth& truth = streams.truth_at(n);

    double power;
    ProxySelection sel;
    if (cfg.proxy_mode == ProxyMode::kFull) {
      st.corr.update_mean(samples, cfg.zeta, n);
      power = st.corr.trace() * inv_m;
    } else {
      Vector grad = Vector::Zero(m);
      double pw = 0.0;
      for (const auto& smp : samples) {
        grad += smp.a * (smp.y - smp.a.dot(st.h));
        pw += smp.a.squaredNorm();
      }
      st.g = cfg.zeta * st.g + grad * inv_n;
      st.light_power = cfg.zeta * st.light_power + pw * inv_n * inv_m;
      power = st.light_power;
    }
    double mu_tilde = cfg.mu_tilde;
    if (cfg.step_schedule == StepSchedule::kLemma1) mu_tilde = power < kColdStartPower ? 1.0 : 1.0 / power;

    if (cfg.proxy_mode == ProxyMode::kFull) {
      const auto apply = [&](const Vector& x) { return st.corr.apply(x, support_of(x)); };
      sel = greedi_proxy_support_with(st.h, st.corr.p(), apply, mu_tilde, cfg.D, cfg.s);
    } else {
      sel = light_proxy_support(st.h, st.g, mu_tilde, cfg.D, cfg.s);
    }
    st.support = sel.support;

    Vector step = Vector::Zero(m);
    for (const auto& smp : samples) {
      double err = smp.y;
      for (Index i : st.support) err -= smp.a[i] * st.h[i];
      for (Index i : st.support) step[i] += smp.a[i] * err;
    }
    Vector psi = Vector::Zero(m);
    for (Index i : st.support) psi[i] = st.h[i] + mu * step[i] * inv_n;
    st.h = hard_threshold(psi, cfg.s).vector;
    if (!st.h.allFinite()) throw NumericalError("non-finite centralized estimate at n = " + std::to_string(n));

    const Vector est[1] = {st.h};
    const SupportSet sup[1] = {st.support};
    detail::record_online(res.trace, n, est, sup, sel.normalized ? 1 : 0, truth);
  }
  res.estimates.assign(static_cast<std::size_t>(nodes), st.h);
  return res;
}

}  // namespace dsparse
