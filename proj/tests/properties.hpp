#pragma once

// Randomized property suites shared by the unit tests and the acceptance
// binary. Each suite runs `cases` independent seeded cases and records the
// first failure.

#include "dsparse/dsparse.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace dsparse::props {

struct PropertyResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  std::string first_failure;

  [[nodiscard]] bool ok() const { return cases > 0 && failures == 0; }
};

inline constexpr int kDefaultCases = 1000;

/// Runs body(case_index, rng) for every case; body returns an empty string on
/// success, a description otherwise.
inline PropertyResult run_property(const std::string& name, int cases, std::uint64_t seed,
                                   const std::function<std::string(int, Rng&)>& body) {
  PropertyResult r{name, 0, 0, {}};
  for (int c = 0; c < cases; ++c) {
    Rng rng(seed, static_cast<std::uint64_t>(c), 0, StreamRole::kProperty);
    std::string err;
    try {
      err = body(c, rng);
    } catch (const std::exception& e) {
      err = std::string("exception: ") + e.what();
    }
    ++r.cases;
    if (!err.empty()) {
      if (r.failures == 0) r.first_failure = "case " + std::to_string(c) + ": " + err;
      ++r.failures;
    }
  }
  return r;
}

inline Index rand_int(Rng& rng, Index lo, Index hi) {  // inclusive
  return lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

inline Vector rand_vector(Rng& rng, Index m, bool with_ties) {
  Vector v(m);
  for (Index i = 0; i < m; ++i) {
    // ties and exact zeros exercise the deterministic tie-break
    v[i] = with_ties ? static_cast<double>(rand_int(rng, -3, 3)) : rng.normal();
  }
  return v;
}

inline Matrix rand_matrix(Rng& rng, Index r, Index c) {
  Matrix a(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) a(i, j) = rng.normal();
  return a;
}

inline SupportSet rand_support(Rng& rng, Index m, Index k) {
  std::vector<Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < k; ++i) std::swap(idx[i], idx[i + rand_int(rng, 0, m - i - 1)]);
  idx.resize(static_cast<std::size_t>(k));
  return SupportSet(idx);
}

inline Topology rand_topology(Rng& rng, Index n) {
  switch (rng.below(4)) {
    case 0: return Topology::path(n);
    case 1: return n >= 3 ? Topology::ring(n) : Topology::path(n);
    case 2: return Topology::star(n);
    default: return Topology::random_geometric(n, 0.5, rng);
  }
}

// ---- core kernels ---------------------------------------------------------------

/// At most s nonzeros, equal to the input on the support, and the support is
/// what a stable sort by decreasing magnitude picks.
inline PropertyResult hard_threshold_property(int cases = kDefaultCases, std::uint64_t seed = 11) {
  return run_property("hard_threshold sparsity and selection", cases, seed, [](int c, Rng& rng) -> std::string {
    const Index m = rand_int(rng, 1, 40);
    const Index s = rand_int(rng, 1, m);
    const Vector v = rand_vector(rng, m, c % 2 == 0);
    const Thresholded t = hard_threshold(v, s);
    if (t.support.size() != static_cast<std::size_t>(s)) return "support size differs from s";
    if (count_nonzeros(t.vector) > s) return "more than s nonzeros";
    for (Index i = 0; i < m; ++i) {
      const bool in = t.support.contains(i);
      if (in && t.vector[i] != v[i]) return "disagrees with input on support";
      if (!in && t.vector[i] != 0.0) return "nonzero off support";
    }
    std::vector<Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(),
                     [&v](Index a, Index b) { return std::abs(v[a]) > std::abs(v[b]); });
    order.resize(static_cast<std::size_t>(s));
    if (!(SupportSet(order) == t.support)) return "support differs from sort oracle";
    return {};
  });
}

/// Moore-Penrose pseudo-inverse through the SVD, used as an independent oracle.
inline Matrix pinv_oracle(const Matrix& a) {
  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = sv.size() ? kRankTolerance * sv[0] : 0.0;
  Vector inv = Vector::Zero(sv.size());
  for (Index i = 0; i < sv.size(); ++i)
    if (sv[i] > tol) inv[i] = 1.0 / sv[i];
  return svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
}

/// Residual orthogonal to A_S, zero off S, and equal to the pseudo-inverse
/// oracle (m <= 8, including rank-deficient column sets).
inline PropertyResult restricted_ls_property(int cases = kDefaultCases, std::uint64_t seed = 12) {
  return run_property("restricted LS orthogonality and oracle", cases, seed, [](int c, Rng& rng) -> std::string {
    const Index m = rand_int(rng, 1, 8);
    const Index l = rand_int(rng, 1, 10);
    const Index k = rand_int(rng, 1, m);
    Matrix a = rand_matrix(rng, l, m);
    const SupportSet s = rand_support(rng, m, k);
    if (c % 4 == 0 && k >= 2) {
      // duplicate a column to force a rank-deficient restricted Gram matrix
      a.col(s[1]) = a.col(s[0]) * 2.0;
    }
    const Vector y = rand_vector(rng, l, false);
    const Vector h = restricted_least_squares(a, y, s);
    for (Index i = 0; i < m; ++i)
      if (!s.contains(i) && h[i] != 0.0) return "nonzero off support";
    const Matrix as = gather_columns(a, s);
    const Vector resid = y - a * h;
    const double scale = std::max(1.0, as.norm() * y.norm());
    const double ortho = (as.transpose() * resid).cwiseAbs().maxCoeff();
    if (ortho > 1e-9 * scale) return "residual not orthogonal: " + format_real(ortho);
    const Vector oracle = pinv_oracle(as) * y;
    Vector hs(static_cast<Index>(s.size()));
    for (std::size_t j = 0; j < s.size(); ++j) hs[static_cast<Index>(j)] = h[s[j]];
    const double diff = (hs - oracle).norm();
    if (diff > 1e-8 * std::max(1.0, oracle.norm())) return "differs from pseudo-inverse oracle by " + format_real(diff);
    return {};
  });
}

inline PropertyResult rip_monotone_property(int cases = kDefaultCases, std::uint64_t seed = 13) {
  return run_property("RIP constant monotone in order", cases, seed, [](int, Rng& rng) -> std::string {
    const Index m = rand_int(rng, 2, 8);
    const Index l = rand_int(rng, 2, 10);
    Matrix a = rand_matrix(rng, l, m) / std::sqrt(static_cast<double>(l));
    double prev = 0.0;
    for (Index k = 1; k <= m; ++k) {
      const double d = rip_constant_bruteforce(a, k);
      if (d < 0.0) return "negative constant";
      if (d + 1e-12 < prev) return "order " + std::to_string(k) + " smaller than order " + std::to_string(k - 1);
      prev = d;
    }
    return {};
  });
}

// ---- network -------------------------------------------------------------------

/// Largest |eigenvalue| of a symmetric matrix by power iteration.
inline double power_iteration_oracle(const Matrix& d, int iters = 5000) {
  Vector x = Vector::LinSpaced(d.rows(), 1.0, 2.0);
  double lam = 0.0;
  for (int i = 0; i < iters; ++i) {
    Vector y = d * (d * x);  // squares the spectrum so +/- pairs do not oscillate
    const double n = y.norm();
    if (n == 0.0) return 0.0;
    lam = std::sqrt(n / x.norm());
    x = y / n;
  }
  return lam;
}

/// Metropolis weights on connected graphs are symmetric, doubly stochastic,
/// respect the topology and mix (spectral value < 1, matching power
/// iteration); uniform weights are column stochastic on the topology.
inline PropertyResult combination_matrix_property(int cases = kDefaultCases, std::uint64_t seed = 14) {
  return run_property("combination matrix consensus conditions", cases, seed, [](int, Rng& rng) -> std::string {
    const Index n = rand_int(rng, 2, 15);
    const Topology t = rand_topology(rng, n);
    const CombinationMatrix met = build_metropolis(t);
    const CombinationMatrix uni = build_uniform(t);
    met.check_support(t);
    uni.check_support(t);
    const Matrix& w = met.weights();
    if (!w.isApprox(w.transpose(), 1e-14) && (w - w.transpose()).cwiseAbs().maxCoeff() > 1e-14)
      return "Metropolis not symmetric";
    if ((w.array() < 0.0).any() || (uni.weights().array() < 0.0).any()) return "negative weight";
    const ConsensusReport r = verify_consensus_conditions(met);
    if (!r.ok()) return "Metropolis fails consensus conditions, lambda = " + format_real(r.spectral_value);
    const Matrix d = w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
    const double oracle = power_iteration_oracle(d);
    if (std::abs(oracle - r.spectral_value) > 1e-6) {
      return "spectral value " + format_real(r.spectral_value) + " vs power iteration " + format_real(oracle);
    }
    const ConsensusReport ru = verify_consensus_conditions(uni);
    if (!ru.column_sums_one) return "uniform columns do not sum to one";
    for (Index k = 0; k < n; ++k)
      if (w(k, k) <= 0.0 || uni.weights()(k, k) <= 0.0) return "zero self weight";
    return {};
  });
}

/// Repeated combining converges to the network mean at rate lambda: the
/// empirical per-round decay over 50 rounds lies within a factor 1.5 of
/// lambda(W - 11^T/N). Also checks sum preservation and permutation
/// equivariance of one round.
inline PropertyResult consensus_decay_property(int cases = kDefaultCases, std::uint64_t seed = 15) {
  return run_property("consensus geometric decay", cases, seed, [](int, Rng& rng) -> std::string {
    const Index n = rand_int(rng, 3, 15);
    const Topology t = rand_topology(rng, n);
    const CombinationMatrix w = build_metropolis(t);
    const double lambda = verify_consensus_conditions(w).spectral_value;
    const Index dim = rand_int(rng, 1, 4);
    std::vector<Vector> x;
    for (Index k = 0; k < n; ++k) x.push_back(rand_vector(rng, dim, false));
    Vector mean = Vector::Zero(dim);
    for (const auto& v : x) mean += v;
    mean /= static_cast<double>(n);

    // sum preservation and permutation equivariance on the first round
    {
      const auto y = synchronous_combine(x, w);
      Vector sum = Vector::Zero(dim);
      for (const auto& v : y) sum += v;
      if ((sum - mean * static_cast<double>(n)).norm() > 1e-10 * std::max(1.0, sum.norm()))
        return "network sum not preserved";
      std::vector<Index> perm(static_cast<std::size_t>(n));
      std::iota(perm.begin(), perm.end(), Index{0});
      for (Index i = n - 1; i > 0; --i) std::swap(perm[i], perm[rand_int(rng, 0, i)]);
      Matrix pw(n, n);
      for (Index a = 0; a < n; ++a)
        for (Index b = 0; b < n; ++b) pw(perm[a], perm[b]) = w.weights()(a, b);
      std::vector<Vector> px(static_cast<std::size_t>(n));
      for (Index a = 0; a < n; ++a) px[perm[a]] = x[a];
      const auto py = synchronous_combine(px, CombinationMatrix(pw));
      for (Index a = 0; a < n; ++a)
        if ((py[perm[a]] - y[a]).norm() > 1e-12) return "combine not permutation equivariant";
    }

    std::vector<double> err{0.0};
    for (const auto& v : x) err[0] = std::max(err[0], (v - mean).norm());
    for (int round = 1; round <= 50; ++round) {
      x = synchronous_combine(x, w);
      double e = 0.0;
      for (const auto& v : x) e = std::max(e, (v - mean).norm());
      err.push_back(e);
    }
    // bound: e_n <= C lambda^n with C from the first round
    const double c0 = err[0] * std::sqrt(static_cast<double>(n));
    for (std::size_t r = 0; r < err.size(); ++r) {
      if (err[r] > c0 * std::pow(lambda, static_cast<double>(r)) + 1e-12) return "decay slower than lambda^n";
    }
    // empirical rate over the part of the 50 rounds still above round-off
    std::size_t hi = 50;
    while (hi > 2 && err[hi] < 1e-11 * err[0]) --hi;
    if (hi < 4 || lambda < 1e-6) return {};  // mixes to round-off almost at once
    const std::size_t lo = hi / 2;
    const double rate = std::pow(err[hi] / err[lo], 1.0 / static_cast<double>(hi - lo));
    if (rate > 1.5 * lambda || rate < lambda / 1.5) {
      return "decay rate " + format_real(rate) + " vs lambda " + format_real(lambda);
    }
    return {};
  });
}

// ---- algorithms ----------------------------------------------------------------

/// |prune(h~) - h*| <= 2 |h~ - h*| whenever |h~|_0 <= 2s, both on random
/// vectors and on every iteration of small batch runs (where the estimates
/// must also stay s-sparse).
inline PropertyResult pruning_bound_property(int cases = kDefaultCases, std::uint64_t seed = 16) {
  return run_property("pruning 2x bound", cases, seed, [](int c, Rng& rng) -> std::string {
    if (c % 10 != 0) {
      const Index m = rand_int(rng, 2, 30);
      const Index s = rand_int(rng, 1, m / 2);
      Vector h_star = Vector::Zero(m);
      for (Index i : rand_support(rng, m, s)) h_star[i] = rng.normal();
      Vector h = Vector::Zero(m);
      for (Index i : rand_support(rng, m, rand_int(rng, 1, 2 * s))) h[i] = rng.normal();
      const Vector pruned = hard_threshold(h, s).vector;
      if ((pruned - h_star).norm() > 2.0 * (h - h_star).norm() + 1e-12) return "bound violated on random vector";
      return {};
    }
    const Index n = rand_int(rng, 2, 5);
    const Index m = rand_int(rng, 8, 20);
    const Index s = rand_int(rng, 1, 3);
    const Index l = rand_int(rng, 2 * s, m);
    const GroundTruth truth = gen_ground_truth(m, s, rng);
    const auto data = gen_batch_data(truth, n, l, rng.uniform(10.0, 40.0), rng.next_u64(), 0);
    const CombinationMatrix w = build_metropolis(rand_topology(rng, n));
    DihatConfig cfg;
    cfg.s = s;
    cfg.max_iters = 10;
    cfg.rel_change_tol = 0.0;
    cfg.variant = static_cast<DihatVariant>(rng.below(3));
    std::string err;
    run_dihat(data, w, w, cfg, truth, [&](int it, const std::vector<DihatNodeState>& st, const DihatRound& round) {
      for (std::size_t k = 0; k < st.size(); ++k) {
        if (count_nonzeros(st[k].h) > s) err = "estimate not s-sparse at iteration " + std::to_string(it);
        if (count_nonzeros(round.fused[k]) <= 2 * s &&
            (st[k].h - truth.h_star).norm() > 2.0 * (round.fused[k] - truth.h_star).norm() + 1e-9) {
          err = "bound violated at iteration " + std::to_string(it);
        }
      }
    });
    return err;
  });
}

/// Online runs keep every estimate s-sparse and finite, R symmetric PSD, and
/// the proxy input norm within max(D, 1).
inline PropertyResult greedi_state_property(int cases = kDefaultCases, std::uint64_t seed = 17) {
  return run_property("online state invariants", cases, seed, [](int, Rng& rng) -> std::string {
    const Index n = rand_int(rng, 1, 4);
    const Index m = rand_int(rng, 4, 12);
    const Index s = rand_int(rng, 1, m / 2);
    Schedule sched(gen_ground_truth(m, s, rng));
    StreamNoiseModel noise;
    noise.base = rng.uniform(0.0, 0.05);
    OnlineStreams streams(std::move(sched), n, noise, rng.next_u64(), 0);
    GreediConfig cfg;
    cfg.s = s;
    cfg.mu = {rng.uniform(0.01, 0.1)};
    cfg.zeta = rng.uniform(0.9, 1.0);
    cfg.D = rng.uniform(0.2, 5.0);
    cfg.proxy_mode = rng.below(2) ? ProxyMode::kFull : ProxyMode::kLight;
    cfg.materialize_combined = rng.below(2) == 1;
    const CombinationMatrix w = build_metropolis(n > 1 ? rand_topology(rng, n) : Topology::complete(1));
    std::string err;
    run_greedi(streams, w, w, cfg, 30, [&](Index t, const std::vector<GreediNodeState>& st) {
      for (const auto& node : st) {
        if (count_nonzeros(node.h) > s) err = "estimate not s-sparse at n = " + std::to_string(t);
        if (!node.h.allFinite()) err = "non-finite estimate";
        if (cfg.proxy_mode == ProxyMode::kFull) {
          const Matrix r = node.corr.R();
          if ((r - r.transpose()).cwiseAbs().maxCoeff() > 1e-12) err = "R not symmetric";
          Eigen::SelfAdjointEigenSolver<Matrix> es(r, Eigen::EigenvaluesOnly);
          if (es.eigenvalues()[0] < -1e-9) err = "R not positive semidefinite";
        }
      }
    });
    if (!err.empty()) return err;

    Vector h = rand_vector(rng, m, false) * rng.uniform(0.0, 3.0 * cfg.D);
    const Vector p_bar = rand_vector(rng, m, false);
    Matrix r_bar = rand_matrix(rng, m, m);
    r_bar = r_bar * r_bar.transpose() / static_cast<double>(m);
    const double mu_tilde = rng.uniform(0.1, 2.0);
    const ProxySelection sel = greedi_proxy_support(h, p_bar, r_bar, mu_tilde, cfg.D, s);
    if (sel.normalized != (h.norm() > cfg.D)) return "normalization branch disagrees with |h| > D";
    const Vector x = sel.normalized ? Vector(h / h.norm()) : h;
    if (x.norm() > std::max(cfg.D, 1.0) + 1e-12) return "proxy input exceeds max(D, 1)";
    const double bound = std::max(cfg.D, 1.0) + mu_tilde * (p_bar - r_bar * x).norm();
    if (sel.proxy.norm() > bound + 1e-9) return "proxy norm exceeds bound";
    return {};
  });
}

// ---- determinism ---------------------------------------------------------------

inline std::string small_experiment_csv(std::uint64_t seed, bool online) {
  ExperimentConfig cfg;
  cfg.name = "determinism";
  cfg.master_seed = seed;
  cfg.mc_runs = 2;
  cfg.threads = 1;
  cfg.scenario.m = 12;
  cfg.scenario.n_nodes = 3;
  cfg.scenario.s = 2;
  cfg.scenario.l = 8;
  cfg.scenario.topology.kind = TopologyKind::kPath;
  if (online) {
    cfg.algorithm = Algorithm::kGreedi;
    cfg.horizon = 15;
  } else {
    cfg.dihat.max_iters = 4;
    cfg.dihat.rel_change_tol = 0.0;
  }
  const auto res = run_experiment(cfg);
  std::ostringstream os;
  write_trace_csv(os, res.trace);
  write_metadata(os, res.trace, cfg.text());
  return os.str();
}

/// Same (config, seed) gives byte-identical CSV and metadata; a different
/// seed gives a different trace of the same length.
inline PropertyResult determinism_property(int cases = kDefaultCases, std::uint64_t seed = 18) {
  return run_property("determinism byte equality", cases, seed, [](int c, Rng& rng) -> std::string {
    const std::uint64_t s = rng.next_u64();
    const bool online = c % 2 == 1;
    const std::string a = small_experiment_csv(s, online);
    const std::string b = small_experiment_csv(s, online);
    if (a != b) return "outputs differ for seed " + std::to_string(s);
    if (c % 50 == 0) {
      const std::string other = small_experiment_csv(s + 1, online);
      if (other == a) return "different seeds gave identical output";
      if (std::count(other.begin(), other.end(), '\n') != std::count(a.begin(), a.end(), '\n'))
        return "different seeds gave different trace lengths";
    }
    return {};
  });
}

inline std::vector<PropertyResult> all_properties(int cases = kDefaultCases) {
  return {hard_threshold_property(cases),      restricted_ls_property(cases),   rip_monotone_property(cases),
          combination_matrix_property(cases),  consensus_decay_property(cases), pruning_bound_property(cases),
          greedi_state_property(cases),        determinism_property(cases)};
}

}  // namespace dsparse::props
