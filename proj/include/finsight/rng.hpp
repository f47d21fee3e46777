// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FINSIGHT_RNG_HPP_
#define FINSIGHT_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

#include "finsight/tensor.hpp"

namespace finsight {

/// Seeded generator with platform-independent draws. The standard
/// distributions are implementation-defined, so the conversions from raw
/// mt19937_64 output are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }
  // Box-Muller; one draw per call.
  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  Tensor uniform_tensor(Shape shape, double lo, double hi) {
    Tensor t(shape);
    for (double& v : t.data()) v = uniform(lo, hi);
    return t;
  }

 private:
  std::mt19937_64 engine_;
};

// splitmix64 finalizer; derives independent per-item seeds from a root.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t item) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ull * (item + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace finsight

#endif  // FINSIGHT_RNG_HPP_
