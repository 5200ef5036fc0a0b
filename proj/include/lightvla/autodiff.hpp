#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "lightvla/matrix.hpp"

namespace lightvla {

class Tape;

/// A matrix value that may be recorded on a Tape.
///
/// An untracked Var is a plain constant; operations whose inputs are all
/// untracked compute values only and record nothing. As soon as one input
/// lives on a tape, the result is recorded on that same tape.
class Var {
 public:
  Var() : constant_(std::make_shared<const Matrix>()) {}
  explicit Var(Matrix value) : constant_(std::make_shared<const Matrix>(std::move(value))) {}

  const Matrix& value() const;
  Tape* tape() const noexcept { return tape_; }
  bool tracked() const noexcept { return tape_ != nullptr; }
  std::size_t id() const noexcept { return id_; }

  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::shared_ptr<const Matrix> constant_;
};

using InputValues = std::span<const Matrix* const>;
using ForwardFn = std::function<Matrix(InputValues)>;
// Accumulates into input_grads[i]; entries for untracked inputs are nullptr.
using BackwardFn = std::function<void(const Matrix& out_grad, const Matrix& out_value,
                                      InputValues inputs, std::span<Matrix* const> input_grads)>;

/// Reverse-mode gradient recorder. Single owner; not thread-safe. Vars keep a
/// raw pointer to their tape, so a Tape must outlive every Var recorded on it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf (a parameter or an input we want gradients for).
  Var leaf(Matrix value);

  /// Records `forward(inputs)` with its vector-Jacobian product. Untracked
  /// inputs are captured as constants.
  Var record(std::span<const Var> inputs, Matrix value, ForwardFn forward, BackwardFn backward);

  const Matrix& value(const Var& v) const;
  /// Adjoint of `v` after backward(); zeros if nothing flowed into it.
  Matrix grad(const Var& v) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates to every recorded node.
  /// Throws ContractError when `loss` is not a 1x1 node of this tape.
  void backward(const Var& loss);

  /// Overwrites a leaf value. Call replay() afterwards to refresh dependents.
  void set_leaf(const Var& leaf, Matrix value);
  /// Re-executes every recorded operation in order from the current leaves.
  void replay();

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Input {
    std::size_t id = 0;
    std::shared_ptr<const Matrix> constant;  // non-null for untracked inputs
  };
  struct Node {
    Matrix value;
    Matrix grad;
    bool has_grad = false;
    std::vector<Input> inputs;
    ForwardFn forward;  // empty for leaves
    BackwardFn backward;
  };

  std::vector<const Matrix*> input_values(const Node& node) const;
  const Node& node_of(const Var& v) const;

  std::deque<Node> nodes_;
};

// Shared dispatch: computes the value and records it when any input is tracked.
Var apply(std::initializer_list<Var> inputs, ForwardFn forward, BackwardFn backward);

// ---- Differentiable operations ----

Var matmul(const Var& a, const Var& b);
Var matmul_transposed(const Var& a, const Var& b);  // a * b^T
Var transpose(const Var& m);
Var add(const Var& a, const Var& b);
Var subtract(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& m, double factor);
// m * s where s is 1x1.
Var scale_by(const Var& m, const Var& s);
Var add_row_broadcast(const Var& m, const Var& row);
Var relu(const Var& m);
Var softmax_rows(const Var& m);
Var rms_normalize(const Var& m, const Var& gain);
// Divides every row by its sum.
Var normalize_row_sums(const Var& m);

Var sum(const Var& m);
Var mean(const Var& m);
// 1 x cols mean over rows.
Var mean_rows(const Var& m);
// Mean squared difference against a constant target, as 1x1.
Var mean_squared_error(const Var& prediction, const Matrix& target);

Var gather_rows(const Var& m, std::vector<std::size_t> rows);
Var concat_rows(const Var& top, const Var& bottom);
Var slice_rows(const Var& m, std::size_t first, std::size_t count);
Var slice_cols(const Var& m, std::size_t first, std::size_t count);

/// Forward value is one-hot(argmax) per row (lowest index on ties), bit-exact.
/// Backward routes the incoming adjoint through softmax_rows of the same
/// input, i.e. the straight-through estimator hard + soft - stop_grad(soft).
Var straight_through_one_hot(const Var& scores);

Var stop_gradient(const Var& m);

}  // namespace lightvla
