#pragma once

#include <cstdint>

namespace air {

/// Derives an independent child seed from (master, tag). splitmix64 finalizer
/// over the xored pair, so streams for distinct tags do not overlap in
/// practice.
inline uint64_t derive_seed(uint64_t master, uint64_t tag) {
  uint64_t z = master ^ (tag + 0x9E3779B97F4A7C15ULL + (master << 6) + (master >> 2));
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Small deterministic generator (splitmix64). Bitwise reproducible across
/// platforms, unlike std:: distributions whose algorithms are
/// implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 24-bit resolution.
  float unit() { return static_cast<float>(next_u64() >> 40) * (1.0f / 16777216.0f); }

  float uniform(float lo, float hi) { return lo + unit() * (hi - lo); }

  /// Uniform integer in [0, n). n must be positive.
  int below(int n) { return static_cast<int>(next_u64() % static_cast<uint64_t>(n)); }

 private:
  uint64_t state_;
};

}  // namespace air
