#include "lightvla/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "lightvla/errors.hpp"

namespace lightvla {

const Matrix& Var::value() const {
  return tape_ != nullptr ? tape_->value(*this) : *constant_;
}

Var Tape::leaf(Matrix value) {
  require_finite(value, "Tape::leaf");
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::span<const Var> inputs, Matrix value, ForwardFn forward, BackwardFn backward) {
  Node node;
  node.inputs.reserve(inputs.size());
  for (const Var& in : inputs) {
    if (in.tracked()) {
      if (in.tape() != this) throw ContractError("Tape::record: input belongs to another tape");
      node.inputs.push_back({in.id(), nullptr});
    } else {
      node.inputs.push_back({0, std::make_shared<const Matrix>(in.value())});
    }
  }
  node.value = std::move(value);
  node.forward = std::move(forward);
  node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tape::Node& Tape::node_of(const Var& v) const {
  if (v.tape() != this || v.id() >= nodes_.size())
    throw ContractError("Tape: variable is not recorded on this tape");
  return nodes_[v.id()];
}

const Matrix& Tape::value(const Var& v) const { return node_of(v).value; }

Matrix Tape::grad(const Var& v) const {
  const Node& node = node_of(v);
  if (node.has_grad) return node.grad;
  return Matrix(node.value.rows(), node.value.cols());
}

std::vector<const Matrix*> Tape::input_values(const Node& node) const {
  std::vector<const Matrix*> values;
  values.reserve(node.inputs.size());
  for (const Input& in : node.inputs)
    values.push_back(in.constant ? in.constant.get() : &nodes_[in.id].value);
  return values;
}

void Tape::backward(const Var& loss) {
  const Node& loss_node = node_of(loss);
  if (loss_node.value.rows() != 1 || loss_node.value.cols() != 1)
    throw ContractError("Tape::backward: loss must be 1x1, got " + loss_node.value.shape_string());

  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix();
  }
  nodes_[loss.id()].grad = Matrix(1, 1, 1.0);
  nodes_[loss.id()].has_grad = true;

  std::vector<Matrix*> grads;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.has_grad || !node.backward) continue;
    grads.assign(node.inputs.size(), nullptr);
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      const Input& in = node.inputs[k];
      if (in.constant) continue;
      Node& src = nodes_[in.id];
      if (!src.has_grad) {
        src.grad = Matrix(src.value.rows(), src.value.cols());
        src.has_grad = true;
      }
      grads[k] = &src.grad;
    }
    const auto values = input_values(node);
    node.backward(node.grad, node.value, values, grads);
  }
}

void Tape::set_leaf(const Var& leaf, Matrix value) {
  const Node& node = node_of(leaf);
  if (node.forward) throw ContractError("Tape::set_leaf: variable is not a leaf");
  require_same_shape(node.value, value, "Tape::set_leaf");
  nodes_[leaf.id()].value = std::move(value);
}

void Tape::replay() {
  for (Node& node : nodes_) {
    if (!node.forward) continue;
    const auto values = input_values(node);
    node.value = node.forward(values);
  }
}

Var apply(std::initializer_list<Var> inputs, ForwardFn forward, BackwardFn backward) {
  Tape* tape = nullptr;
  std::vector<const Matrix*> values;
  values.reserve(inputs.size());
  for (const Var& in : inputs) {
    values.push_back(&in.value());
    if (in.tracked()) {
      if (tape != nullptr && tape != in.tape())
        throw ContractError("apply: inputs recorded on different tapes");
      tape = in.tape();
    }
  }
  Matrix out = forward(values);
  require_finite(out, "differentiable op");
  if (tape == nullptr) return Var(std::move(out));
  return tape->record(std::span<const Var>(inputs.begin(), inputs.size()), std::move(out),
                      std::move(forward), std::move(backward));
}

namespace {

void accumulate(Matrix* dst, const Matrix& delta) {
  if (dst == nullptr) return;
  for (std::size_t i = 0; i < dst->size(); ++i) dst->data()[i] += delta.data()[i];
}

// VJP of a row-wise softmax with output `y`.
Matrix softmax_vjp(const Matrix& y, const Matrix& g) {
  Matrix out(y.rows(), y.cols());
  for (std::size_t r = 0; r < y.rows(); ++r) {
    const auto yr = y.row(r);
    const auto gr = g.row(r);
    double dot = 0.0;
    for (std::size_t c = 0; c < yr.size(); ++c) dot += gr[c] * yr[c];
    auto o = out.row(r);
    for (std::size_t c = 0; c < yr.size(); ++c) o[c] = yr[c] * (gr[c] - dot);
  }
  return out;
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  return apply(
      {a, b}, [](InputValues in) { return matmul(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], matmul_transposed(g, *in[1]));
        if (d[1]) accumulate(d[1], transposed_matmul(*in[0], g));
      });
}

Var matmul_transposed(const Var& a, const Var& b) {
  return apply(
      {a, b}, [](InputValues in) { return matmul_transposed(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], matmul(g, *in[1]));
        if (d[1]) accumulate(d[1], transposed_matmul(g, *in[0]));
      });
}

Var transpose(const Var& m) {
  return apply(
      {m}, [](InputValues in) { return transpose(*in[0]); },
      [](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        accumulate(d[0], transpose(g));
      });
}

Var add(const Var& a, const Var& b) {
  return apply(
      {a, b}, [](InputValues in) { return add(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        accumulate(d[0], g);
        accumulate(d[1], g);
      });
}

Var subtract(const Var& a, const Var& b) {
  return apply(
      {a, b}, [](InputValues in) { return subtract(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        accumulate(d[0], g);
        if (d[1]) accumulate(d[1], scale(g, -1.0));
      });
}

Var hadamard(const Var& a, const Var& b) {
  return apply(
      {a, b}, [](InputValues in) { return hadamard(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], hadamard(g, *in[1]));
        if (d[1]) accumulate(d[1], hadamard(g, *in[0]));
      });
}

Var scale(const Var& m, double factor) {
  return apply(
      {m}, [factor](InputValues in) { return scale(*in[0], factor); },
      [factor](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], scale(g, factor));
      });
}

Var scale_by(const Var& m, const Var& s) {
  if (s.rows() != 1 || s.cols() != 1) throw ShapeError("scale_by: factor must be 1x1");
  return apply(
      {m, s}, [](InputValues in) { return scale(*in[0], (*in[1])(0, 0)); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], scale(g, (*in[1])(0, 0)));
        if (d[1]) (*d[1])(0, 0) += sum(hadamard(g, *in[0]));
      });
}

Var add_row_broadcast(const Var& m, const Var& row) {
  return apply(
      {m, row}, [](InputValues in) { return add_row_broadcast(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        accumulate(d[0], g);
        if (d[1]) {
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*d[1])(0, c) += g(r, c);
        }
      });
}

Var relu(const Var& m) {
  return apply(
      {m},
      [](InputValues in) {
        Matrix out = *in[0];
        for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
        return out;
      },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (!d[0]) return;
        for (std::size_t i = 0; i < g.size(); ++i)
          if (in[0]->data()[i] > 0.0) d[0]->data()[i] += g.data()[i];
      });
}

Var softmax_rows(const Var& m) {
  return apply(
      {m}, [](InputValues in) { return softmax_rows(*in[0]); },
      [](const Matrix& g, const Matrix& y, InputValues, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], softmax_vjp(y, g));
      });
}

Var rms_normalize(const Var& m, const Var& gain) {
  return apply(
      {m, gain}, [](InputValues in) { return rms_normalize(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        const Matrix& x = *in[0];
        const Matrix& w = *in[1];
        const double n = static_cast<double>(x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r) {
          const auto xr = x.row(r);
          const auto gr = g.row(r);
          double mean_sq = 0.0;
          for (double v : xr) mean_sq += v * v;
          mean_sq /= n;
          const double inv = 1.0 / std::sqrt(mean_sq + kRmsEpsilon);
          double dot = 0.0;  // sum_k g_k w_k x_k
          for (std::size_t c = 0; c < xr.size(); ++c) dot += gr[c] * w(0, c) * xr[c];
          if (d[0]) {
            auto dx = d[0]->row(r);
            const double coeff = inv * inv * inv * dot / n;
            for (std::size_t c = 0; c < xr.size(); ++c)
              dx[c] += inv * w(0, c) * gr[c] - coeff * xr[c];
          }
          if (d[1]) {
            for (std::size_t c = 0; c < xr.size(); ++c) (*d[1])(0, c) += gr[c] * xr[c] * inv;
          }
        }
      });
}

Var normalize_row_sums(const Var& m) {
  return apply(
      {m},
      [](InputValues in) {
        Matrix out = *in[0];
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto row = out.row(r);
          double total = 0.0;
          for (double v : row) total += v;
          for (double& v : row) v /= total;
        }
        return out;
      },
      [](const Matrix& g, const Matrix& y, InputValues in, std::span<Matrix* const> d) {
        if (!d[0]) return;
        for (std::size_t r = 0; r < y.rows(); ++r) {
          double total = 0.0;
          for (double v : in[0]->row(r)) total += v;
          double dot = 0.0;
          for (std::size_t c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
          for (std::size_t c = 0; c < y.cols(); ++c) (*d[0])(r, c) += (g(r, c) - dot) / total;
        }
      });
}

Var sum(const Var& m) {
  return apply(
      {m}, [](InputValues in) { return Matrix(1, 1, sum(*in[0])); },
      [](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        if (!d[0]) return;
        for (double& v : d[0]->values()) v += g(0, 0);
      });
}

Var mean(const Var& m) {
  const double count = static_cast<double>(m.value().size());
  return scale(sum(m), 1.0 / count);
}

Var mean_rows(const Var& m) {
  return apply(
      {m},
      [](InputValues in) {
        const Matrix& x = *in[0];
        Matrix out(1, x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < x.cols(); ++c) out(0, c) += x(r, c);
        return scale(out, 1.0 / static_cast<double>(x.rows()));
      },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (!d[0]) return;
        const double inv = 1.0 / static_cast<double>(in[0]->rows());
        for (std::size_t r = 0; r < d[0]->rows(); ++r)
          for (std::size_t c = 0; c < d[0]->cols(); ++c) (*d[0])(r, c) += g(0, c) * inv;
      });
}

Var mean_squared_error(const Var& prediction, const Matrix& target) {
  require_same_shape(prediction.value(), target, "mean_squared_error");
  const Var diff = subtract(prediction, Var(target));
  return mean(hadamard(diff, diff));
}

Var gather_rows(const Var& m, std::vector<std::size_t> rows) {
  auto shared = std::make_shared<const std::vector<std::size_t>>(std::move(rows));
  return apply(
      {m}, [shared](InputValues in) { return gather_rows(*in[0], *shared); },
      [shared](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        if (!d[0]) return;
        for (std::size_t i = 0; i < shared->size(); ++i) {
          auto dst = d[0]->row((*shared)[i]);
          const auto src = g.row(i);
          for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
        }
      });
}

Var concat_rows(const Var& top, const Var& bottom) {
  return apply(
      {top, bottom}, [](InputValues in) { return concat_rows(*in[0], *in[1]); },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        const std::size_t split = in[0]->rows();
        for (std::size_t r = 0; r < g.rows(); ++r) {
          Matrix* dst = r < split ? d[0] : d[1];
          if (!dst) continue;
          auto out = dst->row(r < split ? r : r - split);
          const auto src = g.row(r);
          for (std::size_t c = 0; c < src.size(); ++c) out[c] += src[c];
        }
      });
}

Var slice_rows(const Var& m, std::size_t first, std::size_t count) {
  if (first + count > m.rows()) throw ShapeError("slice_rows: range out of bounds");
  std::vector<std::size_t> rows(count);
  for (std::size_t i = 0; i < count; ++i) rows[i] = first + i;
  return gather_rows(m, std::move(rows));
}

Var slice_cols(const Var& m, std::size_t first, std::size_t count) {
  if (first + count > m.cols()) throw ShapeError("slice_cols: range out of bounds");
  return apply(
      {m},
      [first, count](InputValues in) {
        const Matrix& x = *in[0];
        Matrix out(x.rows(), count);
        for (std::size_t r = 0; r < x.rows(); ++r)
          for (std::size_t c = 0; c < count; ++c) out(r, c) = x(r, first + c);
        return out;
      },
      [first, count](const Matrix& g, const Matrix&, InputValues, std::span<Matrix* const> d) {
        if (!d[0]) return;
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < count; ++c) (*d[0])(r, first + c) += g(r, c);
      });
}

Var straight_through_one_hot(const Var& scores) {
  return apply(
      {scores},
      [](InputValues in) {
        const Matrix& s = *in[0];
        Matrix hard(s.rows(), s.cols());
        const auto winners = argmax_rows(s);
        for (std::size_t r = 0; r < s.rows(); ++r)
          if (s.cols() > 0) hard(r, winners[r]) = 1.0;
        return hard;
      },
      [](const Matrix& g, const Matrix&, InputValues in, std::span<Matrix* const> d) {
        if (d[0]) accumulate(d[0], softmax_vjp(softmax_rows(*in[0]), g));
      });
}

Var stop_gradient(const Var& m) { return Var(m.value()); }

}  // namespace lightvla
