#pragma once

// Counter-based random streams. Every stream is keyed by a hash of
// (master seed, run, node, role), so generation order across nodes or
// Monte-Carlo workers never changes the numbers drawn.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace dsparse {

inline constexpr std::string_view kRngAlgorithm = "philox4x32-10/splitmix64-key/box-muller";

/// Philox4x32 with 10 rounds (Salmon et al., SC'11).
class Philox4x32 {
 public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr Counter block(Counter ctr, Key key) noexcept {
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        key[0] += kBump0;
        key[1] += kBump1;
      }
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
             static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kBump0 = 0x9E3779B9u;
  static constexpr std::uint32_t kBump1 = 0xBB67AE85u;
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// What a stream is used for; part of the stream key.
enum class StreamRole : std::uint64_t {
  kTopology = 1,
  kTruth = 2,
  kSensing = 3,
  kBatchNoise = 4,
  kNoiseVariance = 5,
  kRegressor = 6,
  kStreamNoise = 7,
  kProperty = 8,
};

inline constexpr std::uint64_t derive_key(std::uint64_t master, std::uint64_t run, std::uint64_t node,
                                          StreamRole role) noexcept {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ run);
  h = splitmix64(h ^ (node * 0x100000001B3ull));
  h = splitmix64(h ^ static_cast<std::uint64_t>(role));
  return h;
}

/// Sequential view over one Philox stream. Satisfies UniformRandomBitGenerator
/// but callers should prefer the member distributions, which are fully
/// specified (std:: distributions are implementation-defined).
class Rng {
 public:
  using result_type = std::uint32_t;

  explicit Rng(std::uint64_t key = 0) noexcept
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  Rng(std::uint64_t master, std::uint64_t run, std::uint64_t node, StreamRole role) noexcept
      : Rng(derive_key(master, run, node, role)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = (*this)();
    return (hi << 32) | (*this)();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n) noexcept {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform01();
    } while (u1 <= 0.0);
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

 private:
  void refill() noexcept {
    buf_ = Philox4x32::block(ctr_, key_);
    if (++ctr_[0] == 0 && ++ctr_[1] == 0 && ++ctr_[2] == 0) ++ctr_[3];
    pos_ = 0;
  }

  Philox4x32::Key key_;
  Philox4x32::Counter ctr_{0, 0, 0, 0};
  Philox4x32::Counter buf_{};
  int pos_ = 4;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dsparse
