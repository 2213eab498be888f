#pragma once

#include "dsparse/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace dsparse {

/// Per-iteration record of a single run.
struct RunTrace {
  std::vector<double> msd;
  /// Mean over nodes of |S_k ∩ S| / |S| for the selected support.
  std::vector<double> support_overlap;
  /// Online only: fraction of nodes that took the normalized-proxy branch.
  std::vector<double> normalized_branch;
  /// Batch only: recovered[n][k] = 1 when node k's selected support equals supp(h*).
  std::vector<std::vector<std::uint8_t>> recovered;
  /// Online only: last time instant at which some node's support differed
  /// from the true one (0 if never).
  Index last_support_mismatch = 0;

  [[nodiscard]] std::size_t size() const noexcept { return msd.size(); }
};

/// Shortest round-trip decimal form.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

/// 10 log10(v); zero maps to "-inf".
inline std::string format_db(double v) {
  if (v <= 0.0) return "-inf";
  return format_real(10.0 * std::log10(v));
}

/// iter,msd,recovered_0..recovered_{N-1}
inline void write_batch_trace_csv(std::ostream& os, const RunTrace& t) {
  const std::size_t nodes = t.recovered.empty() ? 0 : t.recovered[0].size();
  os << "iter,msd";
  for (std::size_t k = 0; k < nodes; ++k) os << ",recovered_" << k;
  os << "\n";
  for (std::size_t n = 0; n < t.msd.size(); ++n) {
    os << (n + 1) << "," << format_real(t.msd[n]);
    if (n < t.recovered.size())
      for (auto f : t.recovered[n]) os << "," << int{f};
    os << "\n";
  }
}

/// n,msd,support_overlap,normalized_branch
inline void write_online_trace_csv(std::ostream& os, const RunTrace& t) {
  os << "n,msd,support_overlap,normalized_branch\n";
  for (std::size_t n = 0; n < t.msd.size(); ++n) {
    os << (n + 1) << "," << format_real(t.msd[n]) << ","
       << format_real(n < t.support_overlap.size() ? t.support_overlap[n] : 0.0) << ","
       << format_real(n < t.normalized_branch.size() ? t.normalized_branch[n] : 0.0) << "\n";
  }
}

}  // namespace dsparse
