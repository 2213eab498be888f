#pragma once

// Network topology, combination weights and the synchronous exchange round
// that both estimators run on. Weight matrices are column oriented:
// W(r, k) is the weight node k gives to the value received from node r.

#include "dsparse/linalg.hpp"
#include "dsparse/rng.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace dsparse {

struct TopologyError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum class Connectivity { kRequire, kAllowDisconnected };

/// Undirected graph with self loops. neighbors(k) always contains k.
class Topology {
 public:
  using Edge = std::pair<Index, Index>;

  Topology(Index n_nodes, std::span<const Edge> edges,
           Connectivity policy = Connectivity::kRequire)
      : n_(n_nodes), neighbors_(static_cast<std::size_t>(n_nodes)) {
    if (n_nodes < 1) throw TopologyError("topology needs at least one node");
    for (Index k = 0; k < n_; ++k) neighbors_[k].push_back(k);
    for (auto [u, v] : edges) {
      if (u < 0 || v < 0 || u >= n_ || v >= n_) {
        throw TopologyError("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                            ") outside node range [0, " + std::to_string(n_) + ")");
      }
      if (u == v) continue;
      neighbors_[u].push_back(v);
      neighbors_[v].push_back(u);
    }
    for (auto& nb : neighbors_) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    if (policy == Connectivity::kRequire && !connected()) {
      throw TopologyError("topology with " + std::to_string(n_) + " nodes is not connected");
    }
  }

  static Topology complete(Index n) {
    std::vector<Edge> e;
    for (Index u = 0; u < n; ++u)
      for (Index v = u + 1; v < n; ++v) e.emplace_back(u, v);
    return Topology(n, e);
  }

  static Topology path(Index n) {
    std::vector<Edge> e;
    for (Index u = 0; u + 1 < n; ++u) e.emplace_back(u, u + 1);
    return Topology(n, e);
  }

  static Topology ring(Index n) {
    std::vector<Edge> e;
    for (Index u = 0; u + 1 < n; ++u) e.emplace_back(u, u + 1);
    if (n > 2) e.emplace_back(n - 1, 0);
    return Topology(n, e);
  }

  /// Node 0 is the hub.
  static Topology star(Index n) {
    std::vector<Edge> e;
    for (Index v = 1; v < n; ++v) e.emplace_back(0, v);
    return Topology(n, e);
  }

  /// Nodes uniform on the unit square, linked when within `radius`; redrawn
  /// until connected.
  static Topology random_geometric(Index n, double radius, Rng& rng, int max_attempts = 1000) {
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      std::vector<std::pair<double, double>> pos(static_cast<std::size_t>(n));
      for (auto& p : pos) p = {rng.uniform01(), rng.uniform01()};
      std::vector<Edge> e;
      for (Index u = 0; u < n; ++u) {
        for (Index v = u + 1; v < n; ++v) {
          const double dx = pos[u].first - pos[v].first;
          const double dy = pos[u].second - pos[v].second;
          if (std::hypot(dx, dy) <= radius) e.emplace_back(u, v);
        }
      }
      Topology t(n, e, Connectivity::kAllowDisconnected);
      if (t.connected()) return t;
    }
    throw TopologyError("no connected geometric graph with " + std::to_string(n) +
                        " nodes and radius " + std::to_string(radius) + " after " +
                        std::to_string(max_attempts) + " attempts");
  }

  /// Reads "u v" pairs, one per line, 0-indexed. Blank lines and '#' comments
  /// are skipped. n_nodes <= 0 infers the node count from the largest index.
  static Topology load_edge_list(const std::string& path, Index n_nodes = 0,
                                 Connectivity policy = Connectivity::kRequire) {
    std::ifstream in(path);
    if (!in) throw TopologyError("cannot open edge list '" + path + "'");
    std::vector<Edge> e;
    Index max_id = -1;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      Index u, v;
      if (!(ls >> u)) continue;
      if (!(ls >> v) || u < 0 || v < 0) {
        throw TopologyError(path + ":" + std::to_string(lineno) + ": expected 'u v'");
      }
      e.emplace_back(u, v);
      max_id = std::max({max_id, u, v});
    }
    return Topology(n_nodes > 0 ? n_nodes : max_id + 1, e, policy);
  }

  [[nodiscard]] Index size() const noexcept { return n_; }
  [[nodiscard]] std::span<const Index> neighbors(Index k) const { return neighbors_[k]; }
  /// |N_k|, counting k itself.
  [[nodiscard]] Index degree(Index k) const { return static_cast<Index>(neighbors_[k].size()); }
  [[nodiscard]] bool adjacent(Index r, Index k) const {
    return std::binary_search(neighbors_[k].begin(), neighbors_[k].end(), r);
  }

  [[nodiscard]] bool connected() const {
    std::vector<char> seen(static_cast<std::size_t>(n_), 0);
    std::vector<Index> stack{0};
    seen[0] = 1;
    Index count = 1;
    while (!stack.empty()) {
      const Index u = stack.back();
      stack.pop_back();
      for (Index v : neighbors_[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
      }
    }
    return count == n_;
  }

  [[nodiscard]] std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (Index u = 0; u < n_; ++u)
      for (Index v : neighbors_[u])
        if (u < v) out.emplace_back(u, v);
    return out;
  }

 private:
  Index n_;
  std::vector<std::vector<Index>> neighbors_;
};

/// N x N nonnegative, column-stochastic weights with positive diagonal.
class CombinationMatrix {
 public:
  struct Term {
    Index from;
    double weight;
  };

  explicit CombinationMatrix(Matrix weights, double tol = 1e-12) : w_(std::move(weights)) {
    if (w_.rows() != w_.cols() || w_.rows() == 0) {
      throw DimensionError("combination matrix must be square and non-empty, got " +
                           detail::dims(w_.rows(), w_.cols()));
    }
    require_finite(w_, "combination matrix");
    const Index n = w_.rows();
    columns_.resize(static_cast<std::size_t>(n));
    for (Index k = 0; k < n; ++k) {
      if (w_(k, k) <= 0.0) throw TopologyError("combination weight a(k,k) must be positive");
      if (std::abs(w_.col(k).sum() - 1.0) > tol) {
        throw TopologyError("column " + std::to_string(k) + " of combination matrix sums to " +
                            std::to_string(w_.col(k).sum()));
      }
      for (Index r = 0; r < n; ++r) {
        if (w_(r, k) < 0.0) throw TopologyError("negative combination weight");
        if (w_(r, k) != 0.0) columns_[k].push_back({r, w_(r, k)});
      }
    }
  }

  static CombinationMatrix identity(Index n) { return CombinationMatrix(Matrix::Identity(n, n)); }
  static CombinationMatrix averaging(Index n) {
    return CombinationMatrix(Matrix::Constant(n, n, 1.0 / static_cast<double>(n)));
  }

  [[nodiscard]] Index size() const noexcept { return w_.rows(); }
  [[nodiscard]] const Matrix& weights() const noexcept { return w_; }
  [[nodiscard]] double operator()(Index r, Index k) const { return w_(r, k); }
  /// Nonzero weights feeding node k.
  [[nodiscard]] std::span<const Term> column(Index k) const { return columns_[k]; }

  /// Throws unless every nonzero weight sits on an edge of t.
  void check_support(const Topology& t) const {
    if (t.size() != size()) throw DimensionError("combination matrix and topology sizes differ");
    for (Index k = 0; k < size(); ++k)
      for (const auto& term : columns_[k])
        if (!t.adjacent(term.from, k)) {
          throw TopologyError("nonzero weight between non-neighbors " + std::to_string(term.from) +
                              " and " + std::to_string(k));
        }
  }

 private:
  Matrix w_;
  std::vector<std::vector<Term>> columns_;
};

/// a(r,k) = 1 / max(|N_k|, |N_r|) for neighbors r != k; the diagonal takes the rest.
inline CombinationMatrix build_metropolis(const Topology& t) {
  const Index n = t.size();
  Matrix w = Matrix::Zero(n, n);
  for (Index k = 0; k < n; ++k) {
    double off = 0.0;
    for (Index r : t.neighbors(k)) {
      if (r == k) continue;
      w(r, k) = 1.0 / static_cast<double>(std::max(t.degree(k), t.degree(r)));
      off += w(r, k);
    }
    w(k, k) = 1.0 - off;
  }
  return CombinationMatrix(std::move(w));
}

/// a(r,k) = 1 / |N_k| for every r in N_k.
inline CombinationMatrix build_uniform(const Topology& t) {
  const Index n = t.size();
  Matrix w = Matrix::Zero(n, n);
  for (Index k = 0; k < n; ++k) {
    const double a = 1.0 / static_cast<double>(t.degree(k));
    for (Index r : t.neighbors(k)) w(r, k) = a;
  }
  return CombinationMatrix(std::move(w));
}

struct ConsensusReport {
  bool column_sums_one = false;  // 1^T W = 1^T
  bool row_sums_one = false;     // W 1 = 1
  bool spectral_below_one = false;
  double spectral_value = 0.0;  // spectral radius of W - 11^T/N

  [[nodiscard]] bool ok() const noexcept {
    return column_sums_one && row_sums_one && spectral_below_one;
  }
};

inline double consensus_spectral_value(const Matrix& w) {
  const Index n = w.rows();
  const Matrix d = w - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  if (d.isApprox(d.transpose(), 1e-12)) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(d, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
  }
  Eigen::EigenSolver<Matrix> es(d, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

/// Checks the three consensus conditions; never throws on a failed check.
inline ConsensusReport verify_consensus_conditions(const Matrix& w, double tol = 1e-10,
                                                   double spectral_margin = 1e-9) {
  if (w.rows() != w.cols()) throw DimensionError("consensus check needs a square matrix");
  ConsensusReport r;
  const Vector ones = Vector::Ones(w.rows());
  r.column_sums_one = ((w.transpose() * ones - ones).cwiseAbs().maxCoeff() <= tol);
  r.row_sums_one = ((w * ones - ones).cwiseAbs().maxCoeff() <= tol);
  r.spectral_value = consensus_spectral_value(w);
  r.spectral_below_one = r.spectral_value < 1.0 - spectral_margin;
  return r;
}

inline ConsensusReport verify_consensus_conditions(const CombinationMatrix& w) {
  return verify_consensus_conditions(w.weights());
}

namespace detail {
inline bool same_shape(double, double) { return true; }
template <typename A, typename B>
bool same_shape(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}
template <typename T>
T zero_like(const T& v) {
  if constexpr (std::is_arithmetic_v<T>) {
    return T{0};
  } else {
    return T::Zero(v.rows(), v.cols());
  }
}
}  // namespace detail

/// out[k] = sum_r W(r,k) values[r], computed from the given snapshot only.
template <typename T>
std::vector<T> synchronous_combine(std::span<const T> values, const CombinationMatrix& w) {
  const Index n = w.size();
  if (static_cast<Index>(values.size()) != n) {
    throw DimensionError("synchronous_combine: " + std::to_string(values.size()) +
                         " values for " + std::to_string(n) + " nodes");
  }
  for (const T& v : values) {
    if (!detail::same_shape(v, values[0])) throw DimensionError("synchronous_combine: shape mismatch");
  }
  std::vector<T> out;
  out.reserve(values.size());
  for (Index k = 0; k < n; ++k) {
    T acc = detail::zero_like(values[0]);
    for (const auto& term : w.column(k)) acc += term.weight * values[term.from];
    out.push_back(std::move(acc));
  }
  return out;
}

template <typename T>
std::vector<T> synchronous_combine(const std::vector<T>& values, const CombinationMatrix& w) {
  return synchronous_combine(std::span<const T>(values), w);
}

/// One synchronous exchange round. Nodes post during the round; combine reads
/// only what was delivered at the last barrier.
template <typename T>
class RoundBuffer {
 public:
  explicit RoundBuffer(Index n_nodes)
      : outbox_(static_cast<std::size_t>(n_nodes)), inbox_(static_cast<std::size_t>(n_nodes)) {}

  void post(Index k, T value) { outbox_[k] = std::move(value); }

  /// Barrier: everything posted this round becomes visible.
  void deliver() { inbox_.swap(outbox_); }

  [[nodiscard]] const T& received(Index from) const { return inbox_[from]; }
  [[nodiscard]] std::span<const T> snapshot() const { return inbox_; }

  [[nodiscard]] T combine_for(Index k, const CombinationMatrix& w) const {
    T acc = detail::zero_like(inbox_[k]);
    for (const auto& term : w.column(k)) acc += term.weight * inbox_[term.from];
    return acc;
  }

 private:
  std::vector<T> outbox_;
  std::vector<T> inbox_;
};

}  // namespace dsparse
