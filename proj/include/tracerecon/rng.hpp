#pragma once

#include <cstdint>
#include <cmath>
#include <cstddef>

namespace tracerecon {

// Portable seeded randomness. Two fixed algorithms, implemented verbatim so
// that every trace and report is reproducible bit-for-bit on any platform:
//
//   SplitMix64   (Steele, Lea, Flood 2014) — seed expansion and stream derivation
//   xoshiro256** (Blackman, Vigna 2018)    — the working generator
//
// All stochastic operations take an explicit 64-bit seed; batch operations
// derive one independent stream per work item via derive_seed, so results do
// not depend on scheduling or worker count.

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Mixes a master seed with up to two stream indices into a fresh seed.
inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0) {
  uint64_t s = master;
  uint64_t m = splitmix64_next(s);
  s ^= a * 0x9e3779b97f4a7c15ULL;
  m ^= splitmix64_next(s);
  s ^= b * 0xc2b2ae3d27d4eb4fULL;
  m ^= splitmix64_next(s);
  return m;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& word : s_) word = splitmix64_next(sm);
  }

  uint64_t next() {
    const uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, bound). bound must be >= 1.
  uint64_t uniform(uint64_t bound) {
    const uint64_t threshold = -bound % bound;  // 2^64 mod bound
    for (;;) {
      uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

  // Poisson sample by Knuth's product method; large means are split so the
  // running product never underflows.
  uint64_t poisson(double mean) {
    uint64_t total = 0;
    while (mean > 500.0) {
      total += poisson_small(500.0);
      mean -= 500.0;
    }
    return total + poisson_small(mean);
  }

  template <typename T>
  void shuffle(T* data, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = static_cast<size_t>(uniform(i));
      T tmp = data[i - 1];
      data[i - 1] = data[j];
      data[j] = tmp;
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  uint64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    uint64_t k = 0;
    double product = 1.0;
    do {
      ++k;
      product *= next_double();
    } while (product > limit);
    return k - 1;
  }

  uint64_t s_[4];
};

}  // namespace tracerecon
