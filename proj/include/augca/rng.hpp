#pragma once

#include "augca/common.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace augca {

/// Deterministic random source. The engine is std::mt19937_64 (bit-exact by
/// the standard); all distributions are implemented here because the standard
/// leaves std::*_distribution output unspecified, and every artifact output
/// must replay bit-identically from its seed.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Unbiased integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw ValidationError("uniform_index: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  /// Standard normal via Box-Muller (cached spare).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  /// Draw an index from a discrete distribution given by `probs` (sums to ~1).
  int multinomial(const Vector& probs) {
    const double u = uniform();
    double acc = 0.0;
    for (int i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Round-off may leave u just above the accumulated sum; return the last
    // index with positive mass.
    for (int i = static_cast<int>(probs.size()) - 1; i >= 0; --i) {
      if (probs[i] > 0.0) return i;
    }
    throw ValidationError("multinomial: distribution has no positive mass");
  }

  /// Independent stream derived from this rng's seed lineage.
  Rng fork(std::uint64_t stream) { return Rng(mix_seed(next_u64(), stream)); }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace augca
