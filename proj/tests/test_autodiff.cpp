#include <doctest.h>

#include "smt/error.hpp"
#include "smt/ops.hpp"
#include "test_util.hpp"

using namespace smt;
using testutil::gradient_check;
using testutil::random_tensor;

TEST_CASE("matmul values") {
  Graph g;
  Var id = g.constant(Tensor({2, 2}, {1, 0, 0, 1}));
  Var m = g.constant(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK(g.value(matmul(g, id, m)).values == std::vector<Real>{1, 2, 3, 4});
  Var row = g.constant(Tensor({1, 3}, {1, 2, 3}));
  Var ones = g.constant(Tensor({3, 1}, {1, 1, 1}));
  const Tensor& r = g.value(matmul(g, row, ones));
  CHECK(r.shape == Shape{1, 1});
  CHECK(r.values[0] == 6);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  Var a = g.constant(Tensor({2, 3}));
  Var b = g.constant(Tensor({2, 3}));
  try {
    matmul(g, a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  Rng rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    auto f = [](Graph& g, const std::vector<Var>& v) { return sum(g, matmul(g, v[0], v[1])); };
    CHECK(gradient_check(f, {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}) < 1e-6);
  }
}

TEST_CASE("matmul associativity") {
  Rng rng(2);
  Graph g;
  Var a = g.constant(random_tensor({4, 4}, rng));
  Var b = g.constant(random_tensor({4, 4}, rng));
  Var c = g.constant(random_tensor({4, 4}, rng));
  const auto& x = g.value(matmul(g, matmul(g, a, b), c)).values;
  const auto& y = g.value(matmul(g, a, matmul(g, b, c))).values;
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  CHECK(worst < 1e-9);
}

TEST_CASE("softmax values and stability") {
  Graph g;
  CHECK(g.value(softmax_lastdim(g, g.constant(Tensor({1, 2}, {0, 0})))).values == std::vector<Real>{0.5, 0.5});
  const auto& big = g.value(softmax_lastdim(g, g.constant(Tensor({1, 2}, {1000, 1000})))).values;
  CHECK(big[0] == 0.5);
  CHECK(big[1] == 0.5);

  Rng rng(3);
  const Tensor x = random_tensor({6, 7}, rng, 3.0);
  const auto& s = g.value(softmax_lastdim(g, g.constant(x)));
  for (std::size_t r = 0; r < 6; ++r) {
    double total = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      CHECK(s.at(r, c) >= 0);
      total += s.at(r, c);
    }
    CHECK(std::abs(total - 1) < 1e-9);
  }
}

TEST_CASE("softmax gradient") {
  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({1, 5}, rng);
    auto f = [w](Graph& g, const std::vector<Var>& v) {
      return sum(g, mul(g, softmax_lastdim(g, v[0]), g.constant(w)));
    };
    CHECK(gradient_check(f, {random_tensor({1, 5}, rng)}) < 1e-6);
  }
}

TEST_CASE("layer norm values") {
  Graph g;
  Var ones = g.constant(Tensor::filled({3}, 1));
  Var zeros = g.constant(Tensor::filled({3}, 0));
  const auto& c = g.value(layer_norm(g, g.constant(Tensor({1, 3}, {5, 5, 5})), ones, zeros)).values;
  for (auto v : c) CHECK(std::abs(v) < 1e-6);

  Rng rng(5);
  Var beta = g.constant(Tensor({3}, {0.5, -1, 2}));
  const auto& b = g.value(layer_norm(g, g.constant(random_tensor({2, 3}, rng)), zeros, beta)).values;
  CHECK(b == std::vector<Real>{0.5, -1, 2, 0.5, -1, 2});
}

TEST_CASE("layer norm gradient") {
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({2, 8}, rng);
    auto f = [w](Graph& g, const std::vector<Var>& v) {
      return sum(g, mul(g, layer_norm(g, v[0], v[1], v[2]), g.constant(w)));
    };
    CHECK(gradient_check(f, {random_tensor({2, 8}, rng), random_tensor({8}, rng), random_tensor({8}, rng)}) < 1e-5);
  }
}

TEST_CASE("gelu values and gradient") {
  Graph g;
  const auto& v = g.value(gelu(g, g.constant(Tensor({3}, {0, 10, -10})))).values;
  CHECK(v[0] == 0);
  CHECK(std::abs(v[1] - 10) < 1e-6);
  CHECK(std::abs(v[2]) < 1e-6);
  // x * Phi(x) at x = 1
  const auto& one = g.value(gelu(g, g.constant(Tensor::scalar(1.0)))).values;
  CHECK(std::abs(one[0] - 0.8413447460685429) < 1e-12);

  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({9}, rng);
    auto f = [w](Graph& g, const std::vector<Var>& v) { return sum(g, mul(g, gelu(g, v[0]), g.constant(w))); };
    CHECK(gradient_check(f, {random_tensor({9}, rng, 2.0)}) < 1e-6);
  }
}

TEST_CASE("mse loss") {
  Graph g;
  Var p = g.leaf(Tensor({2}, {0, 0}));
  Var t = g.constant(Tensor({2}, {3, 4}));
  Var loss = mse_loss(g, p, t);
  CHECK(g.value(loss).values[0] == 12.5);
  g.backward(loss);
  const auto grad = g.grad(p);
  CHECK(grad[0] == doctest::Approx(2 * (0 - 3) / 2.0).epsilon(1e-15));
  CHECK(grad[1] == doctest::Approx(2 * (0 - 4) / 2.0).epsilon(1e-15));
  CHECK(g.value(mse_loss(g, t, t)).values[0] == 0);
  CHECK_THROWS_AS(mse_loss(g, p, g.constant(Tensor({3}))), DimensionError);

  Rng rng(8);
  const Tensor target = random_tensor({6}, rng);
  auto f = [target](Graph& g, const std::vector<Var>& v) { return mse_loss(g, v[0], g.constant(target)); };
  CHECK(gradient_check(f, {random_tensor({6}, rng)}) < 1e-6);
}

TEST_CASE("remaining ops gradients") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor w = random_tensor({5, 3}, rng);
    auto f = [w](Graph& g, const std::vector<Var>& v) {
      Var a = add_bias(g, v[0], v[1]);                                  // 4x3
      Var b = concat(g, std::vector<Var>{a, slice_rows(g, v[0], 1, 1)});  // 5x3
      Var c = scale(g, mul(g, b, g.constant(w)), 0.7);
      Var d = transpose(g, c);                                          // 3x5
      Var e = concat_cols(g, std::vector<Var>{slice_cols(g, d, 0, 2), slice_cols(g, d, 3, 2)});
      Var r = reshape(g, add(g, e, e), {12});
      return sum(g, mul(g, r, r));
    };
    CHECK(gradient_check(f, {random_tensor({4, 3}, rng), random_tensor({3}, rng)}) < 1e-6);
  }
}

TEST_CASE("backward basics") {
  Graph g;
  Var x = g.leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  g.backward(sum(g, x));
  for (auto v : g.grad(x)) CHECK(v == 1);

  Graph h;
  Var y = h.leaf(Tensor({1}, {3}));
  h.backward(sum(h, mul(h, y, y)));
  CHECK(h.grad(y)[0] == 6);

  Graph k;
  Var z = k.leaf(Tensor({2}, {1, 2}));
  CHECK_THROWS_AS(k.backward(z), ContractError);
}

TEST_CASE("backward is repeatable bitwise") {
  Rng rng(10);
  Tensor w = random_tensor({4, 4}, rng);
  Graph g;
  Var p = g.parameter(w);
  Var x = g.constant(random_tensor({3, 4}, rng));
  Var loss = sum(g, gelu(g, matmul(g, x, p)));
  w.zero_grad();
  g.backward(loss);
  const auto first = w.grad;
  w.zero_grad();
  g.zero_grad();
  g.backward(loss);
  CHECK(first == w.grad);
}

TEST_CASE("graph is topologically ordered") {
  Rng rng(11);
  Graph g;
  Var a = g.leaf(random_tensor({2, 2}, rng));
  Var b = g.leaf(random_tensor({2, 2}, rng));
  sum(g, matmul(g, add(g, a, b), softmax_lastdim(g, b)));
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (auto in : g.node(i).inputs) CHECK(in < i);
  }
}
