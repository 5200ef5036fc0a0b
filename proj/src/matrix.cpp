#include "lightvla/matrix.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "lightvla/errors.hpp"

namespace lightvla {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

ConstMap view(const Matrix& m) {
  return ConstMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

MutMap view(Matrix& m) {
  return MutMap(m.data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
}

[[noreturn]] void shape_mismatch(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: " + std::to_string(data_.size()) + " values for shape " +
                     shape_string());
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::row_vector(std::span<const double> values) {
  return Matrix(1, values.size(), std::vector<double>(values.begin(), values.end()));
}

std::string Matrix::shape_string() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) shape_mismatch(op, a, b);
}

bool all_finite(const Matrix& m) noexcept {
  return std::all_of(m.values().begin(), m.values().end(), [](double v) { return std::isfinite(v); });
}

void require_finite(const Matrix& m, const char* op) {
  if (!all_finite(m)) throw NumericError(std::string(op) + ": non-finite value in result");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Matrix out(a.rows(), b.cols());
  if (a.cols() > 0) view(out).noalias() = view(a) * view(b);
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_transposed", a, b);
  Matrix out(a.rows(), b.rows());
  if (a.cols() > 0) view(out).noalias() = view(a) * view(b).transpose();
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_mismatch("transposed_matmul", a, b);
  Matrix out(a.cols(), b.cols());
  if (a.rows() > 0) view(out).noalias() = view(a).transpose() * view(b);
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.data()[i];
  return out;
}

Matrix scale(const Matrix& m, double factor) {
  Matrix out = m;
  for (double& v : out.values()) v *= factor;
  return out;
}

Matrix add_row_broadcast(const Matrix& m, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != m.cols()) shape_mismatch("add_row_broadcast", m, row);
  Matrix out = m;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto dst = out.row(r);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += row(0, c);
  }
  return out;
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    auto dst = out.row(r);
    if (src.empty()) continue;
    const double peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t c = 0; c < src.size(); ++c) {
      dst[c] = std::exp(src[c] - peak);
      total += dst[c];
    }
    for (double& v : dst) v /= total;
  }
  return out;
}

Matrix rms_normalize(const Matrix& m, const Matrix& gain) {
  if (gain.rows() != 1 || gain.cols() != m.cols()) shape_mismatch("rms_normalize", m, gain);
  Matrix out(m.rows(), m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto src = m.row(r);
    double mean_sq = 0.0;
    for (double v : src) mean_sq += v * v;
    mean_sq /= static_cast<double>(src.size());
    const double inv = 1.0 / std::sqrt(mean_sq + kRmsEpsilon);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < src.size(); ++c) dst[c] = src[c] * inv * gain(0, c);
  }
  return out;
}

double sum(const Matrix& m) noexcept {
  double total = 0.0;
  for (double v : m.values()) total += v;
  return total;
}

std::vector<std::size_t> argmax_rows(const Matrix& m) {
  std::vector<std::size_t> out(m.rows(), 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c)
      if (row[c] > row[best]) best = c;
    out[r] = best;
  }
  return out;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= m.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                       m.shape_string());
    }
    std::copy_n(m.row(rows[i]).begin(), m.cols(), out.row(i).begin());
  }
  return out;
}

Matrix concat_rows(const Matrix& top, const Matrix& bottom) {
  if (top.cols() != bottom.cols() && !top.empty() && !bottom.empty())
    shape_mismatch("concat_rows", top, bottom);
  const std::size_t cols = top.empty() ? bottom.cols() : top.cols();
  std::vector<double> data;
  data.reserve(top.size() + bottom.size());
  data.insert(data.end(), top.values().begin(), top.values().end());
  data.insert(data.end(), bottom.values().begin(), bottom.values().end());
  return Matrix(top.rows() + bottom.rows(), cols, std::move(data));
}

}  // namespace lightvla
