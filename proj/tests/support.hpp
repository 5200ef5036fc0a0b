#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "lightvla/autodiff.hpp"
#include "lightvla/matrix.hpp"
#include "lightvla/rng.hpp"

namespace testing {

using lightvla::Matrix;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, lightvla::Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (double& v : m.values()) v = scale * (2.0 * rng.uniform() - 1.0);
  return m;
}

// Scalar triple loop.
inline Matrix reference_matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      out(i, j) = acc;
    }
  return out;
}

inline Matrix reference_transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

inline Matrix reference_softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double total = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) total += std::exp(m(i, j));
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = std::exp(m(i, j)) / total;
  }
  return out;
}

inline Matrix reference_rms(const Matrix& m, const Matrix& gain) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double ms = 0.0;
    for (std::size_t j = 0; j < m.cols(); ++j) ms += m(i, j) * m(i, j);
    ms /= static_cast<double>(m.cols());
    const double inv = 1.0 / std::sqrt(ms + lightvla::kRmsEpsilon);
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) * inv * gain(0, j);
  }
  return out;
}

inline double max_abs(const Matrix& m) {
  double best = 0.0;
  for (double v : m.values()) best = std::max(best, std::abs(v));
  return best;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) best = std::max(best, std::abs(a.data()[i] - b.data()[i]));
  return best;
}

/// max |a - b| / max(|a|_inf, |b|_inf, floor).
inline double relative_error(const Matrix& a, const Matrix& b, double floor = 1e-8) {
  return max_abs_diff(a, b) / std::max({max_abs(a), max_abs(b), floor});
}

/// Central differences of a scalar function of one matrix argument.
inline Matrix finite_difference(const std::function<double(const Matrix&)>& f, const Matrix& at,
                                double step = 1e-3) {
  Matrix grad(at.rows(), at.cols());
  Matrix probe = at;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + step;
    const double up = f(probe);
    probe.data()[i] = orig - step;
    const double down = f(probe);
    probe.data()[i] = orig;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

/// Central differences for `leaf` by overwriting it on the tape and replaying.
inline Matrix replay_difference(lightvla::Tape& tape, const lightvla::Var& leaf, const lightvla::Var& loss,
                                double step = 1e-3) {
  const Matrix original = leaf.value();
  auto f = [&](const Matrix& v) {
    tape.set_leaf(leaf, v);
    tape.replay();
    return loss.value()(0, 0);
  };
  Matrix grad = finite_difference(f, original, step);
  tape.set_leaf(leaf, original);
  tape.replay();
  return grad;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace testing
