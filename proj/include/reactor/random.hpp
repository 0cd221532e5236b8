#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace reactor {

/// Seedable random source with platform-stable draws.
///
/// std::uniform_real_distribution and friends are implementation-defined, so
/// every draw here is derived directly from the raw 64-bit engine output.
/// Two Rng objects with the same seed produce identical index sequences on
/// any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform index in [0, n). Requires n > 0.
  std::size_t index(std::size_t n);

  /// Draws an index with probability proportional to `weights` by inverse CDF.
  /// Weights must be nonnegative with a positive sum.
  std::size_t categorical(std::span<const double> weights);

  /// Derives an independent child seed; used to hand each worker its own stream.
  std::uint64_t split() { return engine_() ^ 0x9e3779b97f4a7c15ULL; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace reactor
