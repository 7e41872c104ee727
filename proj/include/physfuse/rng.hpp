// Copyright 2026 The physfuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string_view>

namespace physfuse {

/// Seeded generator with platform-independent draws.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The uniform and normal transforms are implemented here rather
/// than through <random> distributions, whose algorithms are left to the
/// library vendor, so a seed reproduces bit-identical streams everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Independent generator for a named consumer ("vbe", "diffusion", ...).
  /// Depends only on this generator's seed and the name, never on how many
  /// draws have been taken, so stages cannot perturb one another.
  Rng substream(std::string_view name) const;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via the Marsaglia polar method.
  double normal();

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

}  // namespace physfuse
