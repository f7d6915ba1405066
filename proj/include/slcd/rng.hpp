#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "slcd/common.hpp"

namespace slcd {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable per-item seeds: same (seed, stream) -> same value on every platform.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream));
}

// Deterministic RNG. std::mt19937_64 has a fixed bit stream by the standard;
// the distributions here are written out explicitly because the std::
// distribution objects are implementation-defined.
struct Rng {
  explicit Rng(std::uint64_t seed) : gen(seed) {}

  std::uint64_t bits() { return gen(); }

  // [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds
  int uniform_int(int lo, int hi) {
    require(lo <= hi, "uniform_int: lo > hi");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen() % span);
  }

  // Box-Muller, two uniforms per draw
  double normal() {
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::mt19937_64 gen;
};

}  // namespace slcd
