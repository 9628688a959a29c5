#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "cmmi/core.hpp"

namespace cmmi {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Purposes a simulation draws randomness for; each gets its own sub-stream.
enum class StreamTag : std::uint64_t { population = 1, noise = 2, mask = 3, misc = 4 };

/// Counter-based generator: output k of a stream is mix64(key + k * golden),
/// so a stream is fully determined by its key and never depends on thread
/// scheduling. Keys for sub-streams are derived by mixing (seed, replicate,
/// tag).
class CounterRng {
 public:
  explicit constexpr CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr CounterRng substream(std::uint64_t seed, std::uint64_t replicate, StreamTag tag) noexcept {
    std::uint64_t k = mix64(seed ^ 0x6A09E667F3BCC909ULL);
    k = mix64(k ^ (replicate + 0x3C6EF372FE94F82BULL));
    k = mix64(k ^ (static_cast<std::uint64_t>(tag) * 0xA54FF53A5F1D36F1ULL));
    return CounterRng(k);
  }

  constexpr std::uint64_t next_u64() noexcept { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform on [0, 1) from the top 53 bits.
  constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal by Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  Matrix gaussian_matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < rows; ++i) m(i, j) = normal();
    return m;
  }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cmmi
