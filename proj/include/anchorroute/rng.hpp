#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace anchorroute {

/// Seeded generator with portable variate generation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. Uniform and normal variates are derived here rather than through
/// the std distributions, whose algorithms are implementation-defined, so
/// that a seed produces the same stream under every standard library.
///
/// Substreams: `fork(k)` derives an independent generator from
/// (seed, k) through splitmix64, so components that need their own stream
/// (denoiser noise, anchor placement, parameter init) stay decoupled.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer on [0, n). Rejection-free multiply-shift is biased by at
  /// most n / 2^64, which is irrelevant at the sizes used here.
  std::size_t index(std::size_t n) {
    const unsigned __int128 wide =
        static_cast<unsigned __int128>(engine_()) * n;
    return static_cast<std::size_t>(wide >> 64);
  }

  /// Standard normal via Box-Muller; no cached second variate.
  double normal();

  /// Inverse-CDF draw from nonnegative weights (need not be normalized).
  /// Returns the last index with positive weight if rounding leaves the
  /// uniform draw beyond the accumulated total.
  std::size_t categorical(std::span<const double> weights);

  /// Derived generator for substream `stream`.
  Rng fork(std::uint64_t stream) const {
    return Rng(mix(seed_ ^ mix(stream + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace anchorroute
