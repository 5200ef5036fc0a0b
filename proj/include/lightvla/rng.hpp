#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

#include "lightvla/matrix.hpp"

namespace lightvla {

/// Seeded random stream. The engine is std::mt19937_64, whose output sequence
/// is fixed by the standard; all real-valued transforms are done here rather
/// than through <random> distributions, which are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform();
  // Uniform on (0, 1); never returns 0.
  double uniform_open();
  double normal();
  // Uniform integer on [0, bound).
  std::size_t below(std::size_t bound);

  /// Child stream keyed by `stream`. Children depend only on (seed, stream),
  /// not on how much of the parent has been consumed.
  Rng split(std::uint64_t stream) const;

  /// `count` distinct values from [0, bound) in random order.
  std::vector<std::size_t> sample_without_replacement(std::size_t bound, std::size_t count);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Stable 64-bit tag for deriving named streams.
std::uint64_t stream_tag(const char* name) noexcept;

/// i.i.d. entries on [0, alpha). alpha == 0 yields an exact zero matrix and
/// consumes nothing from the stream. Throws ArgumentError for alpha < 0.
Matrix sample_uniform_noise(std::size_t rows, std::size_t cols, double alpha, Rng& rng);

/// alpha * Gumbel(0, 1) entries, -log(-log U) with U on (0, 1).
Matrix sample_gumbel_noise(std::size_t rows, std::size_t cols, double alpha, Rng& rng);

Matrix sample_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng);

}  // namespace lightvla
