#pragma once

// Dense kernels shared by the batch and online estimators: hard thresholding,
// support-restricted least squares, and a brute-force restricted isometry
// constant for small matrices.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dsparse {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

struct DimensionError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when NaN/Inf would enter algorithm state.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EnumerationBudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {
inline std::string dims(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace detail

/// Ascending, duplicate-free set of coordinate indices.
class SupportSet {
 public:
  SupportSet() = default;
  SupportSet(std::initializer_list<Index> idx) : idx_(idx) { normalize(); }
  explicit SupportSet(std::vector<Index> idx) : idx_(std::move(idx)) { normalize(); }

  [[nodiscard]] std::size_t size() const noexcept { return idx_.size(); }
  [[nodiscard]] bool empty() const noexcept { return idx_.empty(); }
  [[nodiscard]] auto begin() const noexcept { return idx_.begin(); }
  [[nodiscard]] auto end() const noexcept { return idx_.end(); }
  [[nodiscard]] Index operator[](std::size_t i) const { return idx_[i]; }
  [[nodiscard]] std::span<const Index> indices() const noexcept { return idx_; }

  [[nodiscard]] bool contains(Index i) const {
    return std::binary_search(idx_.begin(), idx_.end(), i);
  }

  [[nodiscard]] std::size_t overlap(const SupportSet& other) const {
    std::size_t n = 0;
    auto a = idx_.begin();
    auto b = other.idx_.begin();
    while (a != idx_.end() && b != other.idx_.end()) {
      if (*a < *b) {
        ++a;
      } else if (*b < *a) {
        ++b;
      } else {
        ++n, ++a, ++b;
      }
    }
    return n;
  }

  /// Throws unless every index lies in [0, m).
  void check_bounds(Index m) const {
    if (!idx_.empty() && (idx_.front() < 0 || idx_.back() >= m)) {
      throw DimensionError("support index out of range for dimension " + std::to_string(m));
    }
  }

  friend bool operator==(const SupportSet&, const SupportSet&) = default;

 private:
  void normalize() {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
  }

  std::vector<Index> idx_;
};

inline bool all_finite(const Eigen::Ref<const Matrix>& x) { return x.allFinite(); }

inline void require_finite(const Eigen::Ref<const Matrix>& x, const char* what) {
  if (!x.allFinite()) throw NumericalError(std::string("non-finite entries in ") + what);
}

/// Indices of the nonzero entries of v.
inline SupportSet support_of(const Vector& v) {
  std::vector<Index> idx;
  for (Index i = 0; i < v.size(); ++i) {
    if (v[i] != 0.0) idx.push_back(i);
  }
  return SupportSet(std::move(idx));
}

inline Index count_nonzeros(const Vector& v) {
  return static_cast<Index>((v.array() != 0.0).count());
}

/// v on S, zero elsewhere.
inline Vector restrict_to(const Vector& v, const SupportSet& s) {
  s.check_bounds(v.size());
  Vector out = Vector::Zero(v.size());
  for (Index i : s) out[i] = v[i];
  return out;
}

/// Indices of the s largest-magnitude entries. Equal magnitudes resolve to the
/// lower index, so an all-zero vector yields {0, ..., s-1}.
inline SupportSet largest_magnitudes(const Vector& v, Index s) {
  const Index m = v.size();
  if (s < 1 || s > m) {
    throw DimensionError("sparsity " + std::to_string(s) + " outside [1, " + std::to_string(m) + "]");
  }
  std::vector<Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Index{0});
  const auto before = [&v](Index a, Index b) {
    const double fa = std::abs(v[a]);
    const double fb = std::abs(v[b]);
    return fa > fb || (fa == fb && a < b);
  };
  std::nth_element(order.begin(), order.begin() + (s - 1), order.end(), before);
  order.resize(static_cast<std::size_t>(s));
  return SupportSet(std::move(order));
}

struct Thresholded {
  SupportSet support;
  Vector vector;
};

/// supp_s: keep the s largest-magnitude coefficients of v.
inline Thresholded hard_threshold(const Vector& v, Index s) {
  require_finite(v, "hard_threshold input");
  SupportSet support = largest_magnitudes(v, s);
  Vector kept = restrict_to(v, support);
  return {std::move(support), std::move(kept)};
}

inline Matrix gather_columns(const Matrix& a, const SupportSet& s) {
  s.check_bounds(a.cols());
  Matrix out(a.rows(), static_cast<Index>(s.size()));
  Index j = 0;
  for (Index c : s) out.col(j++) = a.col(c);
  return out;
}

/// Rank-revealing threshold used for the restricted normal equations.
inline constexpr double kRankTolerance = 1e-10;

/// argmin ||y - A h|| over h supported on S; minimum-norm minimizer when the
/// restricted columns are rank deficient.
inline Vector restricted_least_squares(const Matrix& a, const Vector& y, const SupportSet& s) {
  if (a.rows() != y.size()) {
    throw DimensionError("restricted_least_squares: A is " + detail::dims(a.rows(), a.cols()) +
                         " but y has length " + std::to_string(y.size()));
  }
  s.check_bounds(a.cols());
  Vector h = Vector::Zero(a.cols());
  if (s.empty() || a.rows() == 0) return h;

  const Matrix as = gather_columns(a, s);
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod;
  cod.setThreshold(kRankTolerance);
  cod.compute(as);
  const Vector coef = cod.solve(y);
  Index j = 0;
  for (Index c : s) h[c] = coef[j++];
  return h;
}

inline Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw DimensionError("matvec: " + detail::dims(a.rows(), a.cols()) + " times length " +
                         std::to_string(x.size()));
  }
  return a * x;
}

inline Vector transpose_matvec(const Matrix& a, const Vector& x) {
  if (a.rows() != x.size()) {
    throw DimensionError("transpose_matvec: (" + detail::dims(a.rows(), a.cols()) +
                         ")^T times length " + std::to_string(x.size()));
  }
  return a.transpose() * x;
}

inline Matrix matmat(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmat: " + detail::dims(a.rows(), a.cols()) + " times " +
                         detail::dims(b.rows(), b.cols()));
  }
  return a * b;
}

/// Number of order-subsets of m columns; saturates at UINT64_MAX.
inline std::uint64_t binomial(std::uint64_t n, std::uint64_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  long double r = 1;
  for (std::uint64_t i = 1; i <= k; ++i) {
    r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
  }
  if (r >= 1.8e19L) return UINT64_MAX;
  return static_cast<std::uint64_t>(std::llround(r));
}

inline constexpr std::uint64_t kRipSupportBudget = 1'000'000;

/// Exact restricted isometry constant of the given order: the largest
/// deviation from 1 of any eigenvalue of A_T^T A_T over all |T| = order.
inline double rip_constant_bruteforce(const Matrix& a, Index order,
                                      std::uint64_t budget = kRipSupportBudget) {
  const Index m = a.cols();
  if (order < 1 || order > m) {
    throw DimensionError("rip order " + std::to_string(order) + " outside [1, " + std::to_string(m) + "]");
  }
  const std::uint64_t count = binomial(static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(order));
  if (count > budget) {
    throw EnumerationBudgetError("C(" + std::to_string(m) + ", " + std::to_string(order) + ") = " +
                                 std::to_string(count) + " supports exceeds budget " +
                                 std::to_string(budget));
  }

  const Matrix gram = a.transpose() * a;
  std::vector<Index> t(static_cast<std::size_t>(order));
  std::iota(t.begin(), t.end(), Index{0});
  Matrix sub(order, order);
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  double delta = 0.0;
  for (;;) {
    for (Index i = 0; i < order; ++i) {
      for (Index j = 0; j < order; ++j) sub(i, j) = gram(t[i], t[j]);
    }
    eig.compute(sub, Eigen::EigenvaluesOnly);
    const auto& ev = eig.eigenvalues();
    delta = std::max({delta, ev[order - 1] - 1.0, 1.0 - ev[0]});

    // next combination in lexicographic order
    Index i = order - 1;
    while (i >= 0 && t[i] == m - order + i) --i;
    if (i < 0) break;
    ++t[i];
    for (Index j = i + 1; j < order; ++j) t[j] = t[j - 1] + 1;
  }
  return delta;
}

}  // namespace dsparse
