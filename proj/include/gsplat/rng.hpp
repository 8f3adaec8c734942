// Copyright Contributors to the gsplat-distill Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gsplat {

// Seed mixer (splitmix64). Used to derive independent streams from one
// master seed without the streams overlapping.
inline std::uint64_t mix_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix_seed(seed ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
}

// Named sub-streams of the master seed. Keeping the ids stable is what makes
// runs reproducible, so never renumber.
enum Stream : std::uint64_t {
  kStreamCloudInit = 1,
  kStreamNoiseGeometry = 2,
  kStreamNoiseColor = 3,
  kStreamTrain = 4,
  kStreamVgs = 5,
  kStreamDensify = 6,
  kStreamIid = 7,
  kStreamProvider = 8,
  kStreamBackground = 9,
  kStreamScene = 10,
};

// Deterministic RNG. The engine is std::mt19937_64 (bit-exact everywhere by
// the standard); the distributions are implemented here because the stdlib
// ones are implementation-defined and would break byte-reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform in [a, b). uniform(a, a) == a.
  double uniform(double a, double b) { return a + uniform01() * (b - a); }

  // Standard normal via Box-Muller; the pair's second value is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * M_PI * u2;
    cached_ = r * std::sin(phi);
    has_cached_ = true;
    return r * std::cos(phi);
  }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace gsplat
