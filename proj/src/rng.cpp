#include "lightvla/rng.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "lightvla/errors.hpp"

namespace lightvla {

namespace {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(seed)) {}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_open() {
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  // Box-Muller, one draw per call.
  const double u1 = uniform_open();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t bound) {
  if (bound == 0) throw ArgumentError("Rng::below: bound must be positive");
  // Rejection sampling keeps the result unbiased.
  const std::uint64_t b = bound;
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % b);
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return static_cast<std::size_t>(x % b);
}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(mix64(seed_ ^ mix64(stream + 0x632be59bd9b4e019ULL)));
}

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t bound, std::size_t count) {
  if (count > bound) throw ArgumentError("sample_without_replacement: count exceeds bound");
  std::vector<std::size_t> pool(bound);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + below(bound - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

std::uint64_t stream_tag(const char* name) noexcept {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char* p = name; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 0x100000001b3ULL;
  }
  return h;
}

Matrix sample_uniform_noise(std::size_t rows, std::size_t cols, double alpha, Rng& rng) {
  if (!(alpha >= 0.0)) throw ArgumentError("sample_uniform_noise: alpha must be >= 0");
  Matrix out(rows, cols);
  if (alpha == 0.0) return out;
  for (double& v : out.values()) {
    v = rng.uniform() * alpha;
    // Rounding of u * alpha can land on alpha itself; keep the interval half-open.
    if (v >= alpha) v = std::nextafter(alpha, 0.0);
  }
  return out;
}

Matrix sample_gumbel_noise(std::size_t rows, std::size_t cols, double alpha, Rng& rng) {
  if (!(alpha >= 0.0)) throw ArgumentError("sample_gumbel_noise: alpha must be >= 0");
  Matrix out(rows, cols);
  if (alpha == 0.0) return out;
  for (double& v : out.values()) v = -alpha * std::log(-std::log(rng.uniform_open()));
  return out;
}

Matrix sample_normal(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  Matrix out(rows, cols);
  for (double& v : out.values()) v = rng.normal() * stddev;
  return out;
}

}  // namespace lightvla
