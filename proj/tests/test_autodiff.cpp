#include <doctest.h>

#include <functional>

#include "lightvla/autodiff.hpp"
#include "lightvla/errors.hpp"
#include "support.hpp"

using namespace lightvla;
using testing::random_matrix;
using testing::relative_error;

TEST_CASE("backward examples") {
  Rng rng(21);
  {
    Tape tape;
    const Var m = tape.leaf(random_matrix(3, 4, rng));
    const Var loss = sum(m);
    tape.backward(loss);
    CHECK(tape.grad(m) == Matrix(3, 4, 1.0));
    CHECK(tape.grad(loss) == Matrix(1, 1, 1.0));
  }
  {
    Tape tape;
    const Var m = tape.leaf(random_matrix(3, 4, rng, 5.0));
    tape.backward(sum(softmax_rows(m)));
    CHECK(testing::max_abs(tape.grad(m)) < 1e-15);
  }
  {
    Tape tape;
    const Var a = tape.leaf(random_matrix(3, 3, rng));
    const Var b = tape.leaf(random_matrix(3, 3, rng));
    const Var p = matmul(a, b);
    const Var loss = sum(hadamard(p, p));
    tape.backward(loss);
    const Matrix ga = tape.grad(a), gb = tape.grad(b);
    CHECK(relative_error(ga, testing::replay_difference(tape, a, loss)) < 1e-4);
    CHECK(relative_error(gb, testing::replay_difference(tape, b, loss)) < 1e-4);
  }
}

TEST_CASE("backward requires a scalar loss on the same tape") {
  Tape tape;
  const Var m = tape.leaf(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(tape.backward(m), ContractError);
  Tape other;
  const Var x = other.leaf(Matrix(1, 1, 1.0));
  CHECK_THROWS_AS(tape.backward(x), ContractError);
  CHECK_THROWS_AS(add(m, other.leaf(Matrix(2, 2))), ContractError);
}

TEST_CASE("untracked operations record nothing") {
  Tape tape;
  const Var a(Matrix{{1, 2}, {3, 4}});
  const Var b = matmul(a, a);
  CHECK_FALSE(b.tracked());
  CHECK(tape.size() == 0);
  CHECK(b.value() == Matrix{{7, 10}, {15, 22}});
}

TEST_CASE("replay reproduces recorded values bit-exactly") {
  Rng rng(22);
  Tape tape;
  const Var a = tape.leaf(random_matrix(4, 5, rng));
  const Var b = tape.leaf(random_matrix(5, 3, rng));
  const Var g = tape.leaf(random_matrix(1, 3, rng));
  const Var out = softmax_rows(rms_normalize(matmul(a, b), g));
  const Var st = straight_through_one_hot(out);
  const Matrix before = out.value(), before_st = st.value();
  tape.replay();
  CHECK(out.value() == before);
  CHECK(st.value() == before_st);
}

TEST_CASE("operation gradients match finite differences") {
  Rng rng(23);
  const Matrix w = random_matrix(3, 4, rng);
  using Unary = std::function<Var(const Var&)>;
  const std::vector<std::pair<const char*, Unary>> ops = {
      {"transpose", [](const Var& x) { return transpose(x); }},
      {"scale", [](const Var& x) { return scale(x, -1.7); }},
      {"softmax", [](const Var& x) { return softmax_rows(scale(x, 3.0)); }},
      {"relu", [](const Var& x) { return relu(x); }},
      {"normalize_row_sums", [](const Var& x) { return normalize_row_sums(softmax_rows(x)); }},
      {"mean_rows", [](const Var& x) { return mean_rows(x); }},
      {"mean", [](const Var& x) { return mean(x); }},
      {"slice", [](const Var& x) { return slice_cols(slice_rows(x, 1, 2), 1, 2); }},
      {"gather", [](const Var& x) { return gather_rows(x, {2, 0, 2, 1}); }},
      {"concat", [](const Var& x) { return concat_rows(x, scale(x, 2.0)); }},
      {"self-matmul", [](const Var& x) { return matmul_transposed(x, x); }},
      {"hadamard", [](const Var& x) { return hadamard(x, x); }},
      {"scale_by", [](const Var& x) { return scale_by(x, sum(slice_rows(x, 0, 1))); }},
      {"stop_gradient", [](const Var& x) { return add(x, stop_gradient(hadamard(x, x))); }},
  };
  for (const auto& [name, op] : ops) {
    CAPTURE(name);
    Tape tape;
    const Var x = tape.leaf(random_matrix(3, 4, rng));
    const Var y = op(x);
    Matrix weights(y.rows(), y.cols());
    for (double& v : weights.values()) v = 2.0 * rng.uniform() - 1.0;
    const Var loss = sum(hadamard(y, Var(weights)));
    tape.backward(loss);
    const Matrix analytic = tape.grad(x);
    if (std::string_view(name) == "stop_gradient") {
      CHECK(relative_error(analytic, weights) < 1e-15);
      continue;
    }
    CHECK(relative_error(analytic, testing::replay_difference(tape, x, loss)) < 1e-4);
  }
  (void)w;
}

TEST_CASE("rms_normalize gradients for input and gain") {
  Rng rng(24);
  Tape tape;
  const Var x = tape.leaf(random_matrix(3, 5, rng));
  const Var g = tape.leaf(random_matrix(1, 5, rng));
  const Var loss = sum(hadamard(rms_normalize(x, g), Var(random_matrix(3, 5, rng))));
  tape.backward(loss);
  const Matrix gx = tape.grad(x), gg = tape.grad(g);
  CHECK(relative_error(gx, testing::replay_difference(tape, x, loss)) < 1e-4);
  CHECK(relative_error(gg, testing::replay_difference(tape, g, loss)) < 1e-4);
}

TEST_CASE("mean squared error gradient") {
  Rng rng(25);
  Tape tape;
  const Var p = tape.leaf(random_matrix(1, 6, rng));
  const Matrix target = random_matrix(1, 6, rng);
  const Var loss = mean_squared_error(p, target);
  tape.backward(loss);
  Matrix expected(1, 6);
  for (std::size_t i = 0; i < 6; ++i) expected(0, i) = 2.0 * (p.value()(0, i) - target(0, i)) / 6.0;
  CHECK(relative_error(tape.grad(p), expected) < 1e-14);
}

TEST_CASE("straight-through one-hot forward and backward") {
  Rng rng(26);
  Tape tape;
  const Var s = tape.leaf(random_matrix(4, 5, rng, 3.0));
  const Var i = straight_through_one_hot(s);
  const auto winners = argmax_rows(s.value());
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(i.value()(r, c) == (c == winners[r] ? 1.0 : 0.0));

  const Matrix w = random_matrix(4, 5, rng);
  tape.backward(sum(hadamard(i, Var(w))));
  // Same adjoint as the soft surrogate.
  Tape ref;
  const Var s2 = ref.leaf(s.value());
  ref.backward(sum(hadamard(softmax_rows(s2), Var(w))));
  CHECK(testing::max_abs_diff(tape.grad(s), ref.grad(s2)) < 1e-15);

  const Var tie = straight_through_one_hot(Var(Matrix{{2, 2, 1}}));
  CHECK(tie.value() == Matrix{{1, 0, 0}});
}

namespace {

// Random composition of differentiable ops over three 3x3 leaves.
Var random_graph(Rng& rng, const std::vector<Var>& leaves, const Var& gain, const Var& row) {
  std::vector<Var> pool = leaves;
  const std::size_t depth = 3 + rng.below(5);
  for (std::size_t d = 0; d < depth; ++d) {
    const Var& a = pool[rng.below(pool.size())];
    const Var& b = pool[rng.below(pool.size())];
    Var next;
    switch (rng.below(11)) {
      case 0: next = scale(matmul(a, b), 0.5); break;
      case 1: next = scale(matmul_transposed(a, b), 0.5); break;
      case 2: next = transpose(a); break;
      case 3: next = add(a, b); break;
      case 4: next = subtract(a, b); break;
      case 5: next = hadamard(a, b); break;
      case 6: next = softmax_rows(a); break;
      case 7: next = rms_normalize(a, gain); break;
      case 8: next = add_row_broadcast(a, row); break;
      case 9: next = normalize_row_sums(softmax_rows(b)); break;
      default: next = scale_by(a, mean(b)); break;
    }
    pool.push_back(next);
  }
  return pool.back();
}

}  // namespace

TEST_CASE("random graphs: backward matches central differences") {
  Rng rng(27);
  for (int g = 0; g < 120; ++g) {
    CAPTURE(g);
    Tape tape;
    std::vector<Var> leaves;
    for (int k = 0; k < 3; ++k) leaves.push_back(tape.leaf(random_matrix(3, 3, rng)));
    const Var gain = tape.leaf(random_matrix(1, 3, rng));
    const Var row = tape.leaf(random_matrix(1, 3, rng));
    const Var out = random_graph(rng, leaves, gain, row);
    const Var loss = sum(hadamard(out, Var(random_matrix(3, 3, rng))));
    tape.backward(loss);
    std::vector<Var> all = leaves;
    all.push_back(gain);
    all.push_back(row);
    for (const Var& leaf : all) {
      const Matrix analytic = tape.grad(leaf);
      CHECK(relative_error(analytic, testing::replay_difference(tape, leaf, loss)) < 1e-4);
    }
  }
}

TEST_CASE("non-finite results raise NumericError") {
  const Var big(Matrix{{1e200}});
  CHECK_THROWS_AS(matmul(big, big), NumericError);
}
