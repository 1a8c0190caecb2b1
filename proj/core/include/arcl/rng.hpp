// Copyright 2026 The ARC Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>

namespace arcl {

/// xoshiro256** seeded through splitmix64.
///
/// Everything here is defined with integer arithmetic plus IEEE double
/// operations, so a given seed yields the same stream on every platform.
/// Normal deviates use the basic Box-Muller transform (both outputs are
/// used), not std::normal_distribution, whose algorithm is unspecified.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, bound). `bound` must be positive.
  std::uint64_t below(std::uint64_t bound);

  /// Independent stream derived from this generator's seed and a label.
  Rng fork(std::uint64_t stream) const;

 private:
  std::array<std::uint64_t, 4> s_{};
  std::uint64_t seed_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace arcl
