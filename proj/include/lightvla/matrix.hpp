#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace lightvla {

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix row_vector(std::span<const double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  std::string shape_string() const;

  // Bit-exact comparison of shape and contents.
  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Throws ShapeError naming `op` when the shapes differ.
void require_same_shape(const Matrix& a, const Matrix& b, const char* op);

bool all_finite(const Matrix& m) noexcept;
// Throws NumericError naming `op` when any entry is NaN or Inf.
void require_finite(const Matrix& m, const char* op);

// ---- Pure kernels. None of these record gradients. ----

Matrix matmul(const Matrix& a, const Matrix& b);
// a * b^T
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
// a^T * b
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& m, double factor);
// Adds a 1 x cols row vector to every row.
Matrix add_row_broadcast(const Matrix& m, const Matrix& row);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);

inline constexpr double kRmsEpsilon = 1e-6;

/// Scales each row to unit root-mean-square, then multiplies elementwise by
/// `gain` (a 1 x cols row vector). The mean square is offset by kRmsEpsilon.
Matrix rms_normalize(const Matrix& m, const Matrix& gain);

double sum(const Matrix& m) noexcept;

// Index of the largest entry in each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& m);

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix concat_rows(const Matrix& top, const Matrix& bottom);

}  // namespace lightvla
