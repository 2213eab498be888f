#pragma once

// Small-instance checks of the convergence results: consensus conditions on
// the weights, error contraction of the batch algorithm on a measured-RIP
// instance, support identification and unbiasedness of the online algorithm.

#include "dsparse/dihat.hpp"
#include "dsparse/experiment.hpp"
#include "dsparse/greedi.hpp"
#include "dsparse/linalg.hpp"
#include "dsparse/network.hpp"
#include "dsparse/scenario.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace dsparse {

struct TheoryCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct TheoryReport {
  std::vector<TheoryCheck> checks;

  [[nodiscard]] bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }

  void write(std::ostream& os) const {
    for (const auto& c : checks) os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
  }
};

inline TheoryCheck check_assumption1(const CombinationMatrix& w) {
  const ConsensusReport r = verify_consensus_conditions(w);
  TheoryCheck c{"assumption1", r.ok(), {}};
  std::ostringstream os;
  os << "lambda(W - 11^T/N) = " << format_real(r.spectral_value);
  std::vector<std::string> bad;
  if (!r.column_sums_one) bad.emplace_back("column_sums_one");
  if (!r.row_sums_one) bad.emplace_back("row_sums_one");
  if (!r.spectral_below_one) bad.emplace_back("spectral_below_one");
  for (const auto& b : bad) os << "; violated: " << b;
  c.detail = os.str();
  return c;
}

// ---- contraction of the batch algorithm ---------------------------------------

struct ContractionInstance {
  std::uint64_t attempt = 0;
  GroundTruth truth;
  std::vector<NodeData> data;
  Matrix a_mean;
  double delta_2s = std::numeric_limits<double>::infinity();
  double delta_3s = std::numeric_limits<double>::infinity();
};

struct ContractionSetup {
  Index m = 16;
  Index l = 12;
  Index n_nodes = 4;
  Index s = 2;
  std::uint64_t master_seed = 1;
  int attempts = 100;
  double delta_bound = 1.0 / 3.0;
};

/// Noiseless instance for one attempt. Node matrices are N(0,1) scaled by
/// sqrt(N/l), so the network-mean matrix has unit expected column norm.
inline ContractionInstance make_contraction_instance(const ContractionSetup& su, std::uint64_t attempt) {
  ContractionInstance inst;
  inst.attempt = attempt;
  Rng rng(su.master_seed, attempt, 0, StreamRole::kTruth);
  inst.truth = gen_ground_truth(su.m, su.s, rng);
  inst.data = gen_batch_data(inst.truth, su.n_nodes, su.l, kNoiseless, su.master_seed, attempt);
  const double c = std::sqrt(static_cast<double>(su.n_nodes) / static_cast<double>(su.l));
  inst.a_mean = Matrix::Zero(su.l, su.m);
  for (auto& d : inst.data) {
    d.A *= c;
    d.y *= c;
    inst.a_mean += d.A;
  }
  inst.a_mean /= static_cast<double>(su.n_nodes);
  inst.delta_3s = rip_constant_bruteforce(inst.a_mean, std::min<Index>(3 * su.s, su.m));
  inst.delta_2s = rip_constant_bruteforce(inst.a_mean, std::min<Index>(2 * su.s, su.m));
  return inst;
}

struct ContractionSearch {
  std::optional<ContractionInstance> verified;  // first instance meeting the bound
  ContractionInstance best;                     // smallest delta_3s seen
  int attempts = 0;
};

inline ContractionSearch find_contraction_instance(const ContractionSetup& su) {
  ContractionSearch out;
  for (int a = 0; a < su.attempts; ++a) {
    ContractionInstance inst = make_contraction_instance(su, static_cast<std::uint64_t>(a));
    ++out.attempts;
    if (inst.delta_3s < out.best.delta_3s) out.best = inst;
    if (inst.delta_3s < su.delta_bound) {
      out.verified = std::move(inst);
      break;
    }
  }
  return out;
}

/// sqrt(8 d3^2 / (1 - d2^2)); infinite when d2 >= 1.
inline double contraction_rate(double delta_3s, double delta_2s) {
  if (delta_2s >= 1.0) return std::numeric_limits<double>::infinity();
  return std::sqrt(8.0 * delta_3s * delta_3s / (1.0 - delta_2s * delta_2s));
}

struct ContractionRun {
  double rho = 0.0;
  int burn_in = -1;        // first iteration with measurement consensus within 1e-6
  double max_ratio = 0.0;  // over iterations after burn-in
  int checked = 0;
  int violations = 0;
  int exact_at = -1;  // first iteration with error <= 1e-10
  std::vector<double> ratios;  // per iteration, NaN when undefined
};

/// Runs the full-exchange batch algorithm on a noiseless instance over a ring
/// and measures the networkwise error ratio after measurement consensus.
inline ContractionRun run_contraction(const ContractionInstance& inst, Index s, int iters = 60, double slack = 1e-6) {
  const Index n = static_cast<Index>(inst.data.size());
  const CombinationMatrix w = build_metropolis(n > 2 ? Topology::ring(n) : Topology::complete(n));
  DihatConfig cfg;
  cfg.s = s;
  cfg.max_iters = iters;
  cfg.rel_change_tol = 0.0;
  Vector y_mean = Vector::Zero(inst.data[0].y.size());
  for (const auto& d : inst.data) y_mean += d.y;
  y_mean /= static_cast<double>(n);

  ContractionRun out;
  out.rho = contraction_rate(inst.delta_3s, inst.delta_2s);
  auto states = dihat_init(inst.data);
  double prev_err = std::sqrt(static_cast<double>(n)) * inst.truth.h_star.norm();
  for (int it = 1; it <= iters; ++it) {
    dihat_iteration(states, w, w, cfg);
    double gap = 0.0;
    double err2 = 0.0;
    for (const auto& st : states) {
      gap = std::max(gap, (st.y_bar - y_mean).cwiseAbs().maxCoeff());
      gap = std::max(gap, (st.A_bar - inst.a_mean).cwiseAbs().maxCoeff());
      err2 += (st.h - inst.truth.h_star).squaredNorm();
    }
    const double err = std::sqrt(err2);
    if (out.burn_in < 0 && gap <= 1e-6) out.burn_in = it;
    if (out.exact_at < 0 && err <= 1e-10) out.exact_at = it;
    double ratio = std::numeric_limits<double>::quiet_NaN();
    if (prev_err > 1e-10) ratio = err / prev_err;
    out.ratios.push_back(ratio);
    if (out.burn_in >= 0 && it > out.burn_in && !std::isnan(ratio)) {
      ++out.checked;
      out.max_ratio = std::max(out.max_ratio, ratio);
      if (ratio > out.rho + slack) ++out.violations;
    }
    prev_err = err;
  }
  return out;
}

inline TheoryCheck check_theorem1(const ContractionSetup& su) {
  TheoryCheck c{"theorem1_contraction", false, {}};
  const ContractionSearch search = find_contraction_instance(su);
  std::ostringstream os;
  if (!search.verified) {
    const ContractionRun r = run_contraction(search.best, su.s);
    os << "no instance with delta_" << 3 * su.s << " < " << format_real(su.delta_bound) << " in " << search.attempts
       << " seeded attempts (best delta_" << 3 * su.s << " = " << format_real(search.best.delta_3s) << ", delta_"
       << 2 * su.s << " = " << format_real(search.best.delta_2s) << " at attempt " << search.best.attempt
       << "); unverified run there: max ratio " << format_real(r.max_ratio) << " over " << r.checked
       << " iterations after burn-in " << r.burn_in;
    if (r.exact_at >= 0) os << " (exact recovery at iteration " << r.exact_at << ")";
    c.detail = os.str();
    return c;
  }
  const ContractionRun r = run_contraction(*search.verified, su.s);
  c.passed = r.burn_in >= 0 && r.violations == 0;
  os << "attempt " << search.verified->attempt << ", delta_3s = " << format_real(search.verified->delta_3s)
     << ", rho = " << format_real(r.rho) << ", max ratio " << format_real(r.max_ratio) << " over " << r.checked
     << " iterations after burn-in " << r.burn_in << ", violations " << r.violations;
  c.detail = os.str();
  return c;
}

// ---- online checks -------------------------------------------------------------

/// Fraction of (node, coordinate) pairs whose Monte-Carlo mean is within
/// `k` standard errors of h*. Zero spread with zero deviation counts as within.
inline double unbiased_fraction(const std::vector<RunArtifact>& runs, const Vector& h_star, double k = 3.0) {
  if (runs.size() < 2) throw std::invalid_argument("need at least two runs");
  const std::size_t nodes = runs[0].estimates.size();
  const Index m = h_star.size();
  const double n = static_cast<double>(runs.size());
  std::size_t ok = 0;
  for (std::size_t node = 0; node < nodes; ++node) {
    Vector mean = Vector::Zero(m);
    for (const auto& r : runs) mean += r.estimates[node];
    mean /= n;
    Vector var = Vector::Zero(m);
    for (const auto& r : runs) var += (r.estimates[node] - mean).cwiseAbs2();
    var /= (n - 1.0);
    for (Index i = 0; i < m; ++i) {
      const double se = std::sqrt(var[i] / n);
      if (std::abs(mean[i] - h_star[i]) <= k * se) ++ok;
    }
  }
  return static_cast<double>(ok) / static_cast<double>(nodes * static_cast<std::size_t>(m));
}

inline ExperimentConfig small_online_config(std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.name = "theory-online";
  cfg.algorithm = Algorithm::kGreedi;
  cfg.scenario.m = 20;
  cfg.scenario.n_nodes = 4;
  cfg.scenario.s = 3;
  cfg.scenario.topology.kind = TopologyKind::kRing;
  cfg.horizon = 2000;
  cfg.mc_runs = 1;
  cfg.master_seed = seed;
  cfg.threads = 1;
  return cfg;
}

inline TheoryCheck check_lemma1(std::uint64_t seed) {
  ExperimentConfig cfg = small_online_config(seed);
  cfg.scenario.noise = StreamNoiseModel::none();
  cfg.mc_runs = 5;
  const auto res = run_experiment(cfg);
  Index worst = 0;
  for (const auto& r : res.runs) worst = std::max(worst, r.trace.last_support_mismatch);
  TheoryCheck c{"lemma1_support", worst < cfg.horizon, {}};
  c.detail = "all nodes on the true support from n = " + std::to_string(worst + 1) + " in " +
             std::to_string(cfg.mc_runs) + " noiseless runs of horizon " + std::to_string(cfg.horizon);
  return c;
}

inline TheoryCheck check_theorem2(std::uint64_t seed, int runs = 100) {
  ExperimentConfig cfg = small_online_config(seed);
  cfg.scenario.fixed_truth = true;
  cfg.mc_runs = runs;
  const auto res = run_experiment(cfg);
  const double frac = unbiased_fraction(res.runs, res.runs[0].final_truth.h_star);
  TheoryCheck c{"theorem2_unbiased", frac >= 0.95, {}};
  c.detail = format_real(frac) + " of (node, coordinate) means within 3 standard errors over " +
             std::to_string(runs) + " runs";
  return c;
}

struct TheoryOptions {
  std::uint64_t seed = 1;
  bool disconnected = false;  // negative control for the consensus check
  int theorem2_runs = 100;
  int contraction_attempts = 100;
};

inline TheoryReport verify_theory(const TheoryOptions& opt = {}) {
  TheoryReport rep;
  if (opt.disconnected) {
    const std::vector<Topology::Edge> edges{{0, 1}, {2, 3}};
    const Topology t(4, edges, Connectivity::kAllowDisconnected);
    rep.checks.push_back(check_assumption1(build_metropolis(t)));
  } else {
    Rng rng(opt.seed, 0, 0, StreamRole::kTopology);
    rep.checks.push_back(check_assumption1(build_metropolis(Topology::random_geometric(10, 0.4, rng))));
  }
  ContractionSetup su;
  su.master_seed = opt.seed;
  su.attempts = opt.contraction_attempts;
  rep.checks.push_back(check_theorem1(su));
  rep.checks.push_back(check_lemma1(opt.seed));
  rep.checks.push_back(check_theorem2(opt.seed, opt.theorem2_runs));
  return rep;
}

}  // namespace dsparse
