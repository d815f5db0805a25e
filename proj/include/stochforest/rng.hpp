#ifndef STOCHFOREST_RNG_HPP_
#define STOCHFOREST_RNG_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "stochforest/errors.hpp"

namespace stochforest {

/// Seedable generator with hand-written distributions.
///
/// The standard library's distribution objects are implementation-defined,
/// so only the raw 64-bit engine (whose output sequence is fixed by the
/// standard) is borrowed from <random>. Every variate is derived from that
/// stream, which makes a seed reproduce the same draws on any conforming
/// toolchain.
class Rng {
 public:
  /// Offset between sub-streams derived from one user seed (one per chain).
  static constexpr std::uint64_t kStreamOffset = 0x9E3779B97F4A7C15ULL;

  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed + index * kStreamOffset);
  }

  /// Seed from the environment when no seed was requested.
  static std::uint64_t nondeterministic_seed() {
    std::random_device rd;
    return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::size_t uniform_index(std::size_t n) {
    require(n > 0, ErrorCode::kInvalidArgument, "uniform_index: n must be positive");
    const std::uint64_t range = static_cast<std::uint64_t>(n);
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % range);
  }

  /// Standard normal via the Marsaglia polar method.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Gamma(shape, rate) via Marsaglia & Tsang (2000).
  double gamma(double shape, double rate) {
    require(shape > 0.0 && rate > 0.0, ErrorCode::kInvalidArgument,
            "gamma: shape and rate must be positive");
    if (shape < 1.0) {
      const double g = gamma(shape + 1.0, rate);
      return g * std::pow(uniform(), 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform();
      const double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v / rate;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  /// Inverse gamma with density proportional to x^{-shape-1} exp(-scale / x).
  double inverse_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

  double chi_squared(double df) { return gamma(0.5 * df, 0.5); }

  double student_t(double df) { return normal() / std::sqrt(chi_squared(df) / df); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Z ~ N(0, 1) conditioned on Z > lower.
  double truncated_normal_above(double lower) {
    if (lower < 0.45) {
      for (;;) {
        const double z = normal();
        if (z > lower) return z;
      }
    }
    // Robert (1995) exponential rejection sampler for the far tail.
    const double lambda = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
    for (;;) {
      const double z = lower - std::log(uniform()) / lambda;
      const double diff = z - lambda;
      if (uniform() < std::exp(-0.5 * diff * diff)) return z;
    }
  }

  /// Index drawn proportionally to non-negative weights.
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    require(total > 0.0 && std::isfinite(total), ErrorCode::kNumeric,
            "categorical: weights must have a positive finite sum");
    const double target = uniform() * total;
    double acc = 0.0;
    std::size_t last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0.0) continue;
      acc += weights[i];
      last_positive = i;
      if (target < acc) return i;
    }
    return last_positive;
  }

  /// Index drawn proportionally to exp(log_weights), stabilised by the max.
  std::size_t categorical_log(std::span<const double> log_weights) {
    double max_lw = -std::numeric_limits<double>::infinity();
    for (double lw : log_weights) max_lw = std::max(max_lw, lw);
    require(std::isfinite(max_lw), ErrorCode::kNumeric,
            "categorical_log: no finite log weight");
    scratch_.resize(log_weights.size());
    for (std::size_t i = 0; i < log_weights.size(); ++i) {
      scratch_[i] = std::exp(log_weights[i] - max_lw);
    }
    return categorical(scratch_);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
  std::vector<double> scratch_;
};

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Phi kept inside the open unit interval: far tails clamp to the nearest
/// representable values instead of rounding to 0 or 1.
inline double normal_cdf_open(double x) {
  return std::clamp(normal_cdf(x), std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
}

}  // namespace stochforest

#endif  // STOCHFOREST_RNG_HPP_
