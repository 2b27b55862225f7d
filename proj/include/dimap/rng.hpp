#pragma once

#include <cassert>
#include <cstdint>
#include <random>

namespace dimap {

/// Seeded random stream. All draws in a training run come from one Rng
/// instance consumed in a fixed order, so runs are reproducible bit for bit.
/// The uniform helpers are written out explicitly instead of going through
/// std distributions, whose output is implementation defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). Rejection sampling keeps it unbiased; n == 1
  /// consumes no draw.
  size_t uniform_index(size_t n) {
    assert(n > 0);
    if (n == 1) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x = gen_();
    while (x >= limit) x = gen_();
    return static_cast<size_t>(x % n);
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform_index(static_cast<size_t>(hi - lo + 1)));
  }

  /// Deterministically derive a child seed (used to give each episode or
  /// each sweep run its own stream in a documented order).
  uint64_t derive() { return gen_(); }

 private:
  std::mt19937_64 gen_;
};

}  // namespace dimap
