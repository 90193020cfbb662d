#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "indrnn/types.hpp"

namespace indrnn {

// xoshiro256** seeded through splitmix64. Small, fast, and easy to freeze in
// tests; every draw has a fixed cost in generator outputs so streams can be
// reproduced exactly from (seed, draw count).
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
  }

  // One generator output per call.
  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // Exactly one u64 draw: top 53 bits scaled into [0, 1).
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Exactly one u64 draw.
  double uniform(double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("uniform: lo must be < hi");
    return lo + next_unit() * (hi - lo);
  }

  // Box-Muller, always consuming exactly two u64 draws. The pair's second
  // value is discarded rather than cached so the draw count stays linear.
  double normal(double mean, double stddev) {
    double u1 = next_unit();
    const double u2 = next_unit();
    if (u1 <= 0) u1 = 0x1.0p-53;  // log(0) guard; smallest representable draw
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ConfigError("below: n must be positive");
    const std::uint64_t threshold = (0ULL - n) % n;
    while (true) {
      const std::uint64_t x = next_u64();
      const unsigned __int128 m = static_cast<unsigned __int128>(x) * n;
      if (static_cast<std::uint64_t>(m) >= threshold)
        return static_cast<std::uint64_t>(m >> 64);
      // else reject and redraw (probability < n / 2^64)
    }
  }

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  static std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
  }

  std::array<std::uint64_t, 4> s_{};
};

inline Rng seed_rng(std::uint64_t seed) { return Rng(seed); }

inline double sample_uniform(Rng& rng, double lo, double hi) {
  return rng.uniform(lo, hi);
}

inline double sample_normal(Rng& rng, double mean, double stddev) {
  return rng.normal(mean, stddev);
}

}  // namespace indrnn
