#pragma once

// Counter-based deterministic random numbers.
//
// Every draw is a pure function of (seed, stream coordinates, draw counter):
//   key  = fold(seed, coordinates...) with the SplitMix64 finalizer
//   u64  = splitmix64_finalize(key + counter * 0x9E3779B97F4A7C15)
// Gaussians use the cosine branch of Box-Muller on two consecutive draws.
// Results therefore do not depend on evaluation order or thread count.

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace seqkf {

inline constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class RandomStream {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  explicit RandomStream(std::uint64_t seed, std::initializer_list<std::uint64_t> coords = {}) : key_(seed) {
    for (std::uint64_t c : coords) key_ = splitmix64_finalize(key_ ^ splitmix64_finalize(c + kGolden));
  }

  std::uint64_t next_u64() { return splitmix64_finalize(key_ + (++counter_) * kGolden); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (cosine branch).
  double gaussian() {
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace seqkf
