#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

#include <boost/math/special_functions/beta.hpp>

namespace astod::rng {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed of an independent stream identified by a tuple of keys, e.g.
/// (run seed, image id, view, purpose).
inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(seed);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632BE59BD9B4E019ULL));
  return h;
}

/// mt19937_64 with explicitly defined derived draws, so sequences are
/// identical across standard library implementations.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Standard normal from exactly two uniforms (Box-Muller, first output).
  double normal() noexcept {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// log-uniform on [lo, hi].
  double log_uniform(double lo, double hi) noexcept {
    return std::exp(uniform(std::log(lo), std::log(hi)));
  }

 private:
  std::mt19937_64 engine_;
};

/// Beta(a, b) quantile. Monotone in u for fixed (a, b), and increasing in a,
/// which lets callers couple draws across models through a shared uniform.
inline double beta_quantile(double a, double b, double u) {
  return boost::math::ibeta_inv(a, b, u);
}

/// Poisson(lambda) by inverse CDF from a single uniform. Monotone in lambda
/// for a fixed u.
inline int poisson_quantile(double lambda, double u) noexcept {
  if (lambda <= 0.0) return 0;
  double p = std::exp(-lambda);
  double cdf = p;
  int k = 0;
  while (u > cdf && k < 100000) {
    ++k;
    p *= lambda / k;
    cdf += p;
    if (p == 0.0 && cdf < u) break;  // tail underflow
  }
  return k;
}

/// Index drawn from unnormalized weights by inverse CDF.
template <typename Range>
std::size_t categorical(const Range& weights, double u) noexcept {
  double total = 0.0;
  for (double w : weights) total += w;
  double acc = 0.0;
  std::size_t i = 0;
  std::size_t last = 0;
  for (double w : weights) {
    acc += w;
    if (w > 0.0) last = i;
    if (u * total < acc) return i;
    ++i;
  }
  return last;
}

}  // namespace astod::rng
