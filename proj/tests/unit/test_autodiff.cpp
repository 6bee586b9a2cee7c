#include <doctest.h>

#include <functional>

#include "layerlens/autodiff.h"
#include "layerlens/error.h"
#include "layerlens/rng.h"
#include "support/oracles.h"

using namespace layerlens;
using layerlens::testing::numeric_gradient;
using layerlens::testing::relative_error;

namespace {

using UnaryLoss = std::function<Var(const Var&)>;

double fd_error(const UnaryLoss& loss, const Tensor& x) {
  Var leaf = Var::leaf(x);
  Tensor analytic = backward(loss(leaf)).of(leaf);
  Tensor numeric = numeric_gradient([&](const Tensor& p) { return loss(Var::constant(p)).value().item(); }, x);
  return relative_error(analytic, numeric);
}

Tensor away_from_zero(Tensor t, double gap) {
  for (double& v : t.data()) v = v < 0 ? v - gap : v + gap;
  return t;
}

}  // namespace

TEST_CASE("backward examples") {
  Var x = Var::leaf(Tensor::vector({1, 2}));
  CHECK(backward(reduce_sum(x)).of(x) == Tensor::ones({2}));
  Var y = Var::leaf(Tensor::vector({1, 2}));
  CHECK(backward(reduce_sum(square(y))).of(y) == Tensor::vector({2, 4}));
}

TEST_CASE("backward rejects non-scalar loss") {
  Var x = Var::leaf(Tensor::vector({1, 2}));
  CHECK_THROWS_AS(backward(square(x)), ShapeError);
}

TEST_CASE("backward frees the graph") {
  Var x = Var::leaf(Tensor::vector({1, 2}));
  Var loss = reduce_sum(square(x));
  backward(loss);
  Gradients again = backward(loss);
  CHECK_FALSE(again.contains(x));
}

TEST_CASE("constants are not recorded") {
  Var c = Var::constant(Tensor::vector({1, 2}));
  Var r = square(c);
  CHECK_FALSE(r.requires_grad());
  Var leaf = Var::leaf(Tensor::vector({1, 2}));
  CHECK(mul(leaf, c).requires_grad());
}

TEST_CASE("shared subexpressions accumulate gradients") {
  Var x = Var::leaf(Tensor::vector({3}));
  Var y = mul(x, x);
  Var loss = reduce_sum(add(y, y));
  CHECK(backward(loss).of(x)[0] == doctest::Approx(12));
}

TEST_CASE("grad of sum(a*b) wrt a equals b") {
  RngStream rng(11);
  Tensor a = gaussian(rng, {3, 4});
  Tensor b = gaussian(rng, {3, 4});
  Var va = Var::leaf(a);
  Tensor g = backward(reduce_sum(mul(va, Var::constant(b)))).of(va);
  CHECK(g == b);
  double err = fd_error([&](const Var& v) { return reduce_sum(mul(v, Var::constant(b))); }, a);
  CHECK(err <= 1e-8);
}

TEST_CASE("matmul gradient vs finite differences") {
  RngStream rng(12);
  Tensor a = gaussian(rng, {3, 5});
  Tensor b = gaussian(rng, {5, 2});
  Tensor w = gaussian(rng, {3, 2});
  CHECK(fd_error([&](const Var& v) { return reduce_sum(mul(matmul(v, Var::constant(b)), Var::constant(w))); }, a) <=
        1e-6);
  CHECK(fd_error([&](const Var& v) { return reduce_sum(mul(matmul(Var::constant(a), v), Var::constant(w))); }, b) <=
        1e-6);
}

TEST_CASE("randomized finite-difference check of every op") {
  RngStream root(2024);
  for (int trial = 0; trial < 5; ++trial) {
    RngStream rng = root.derive("trial" + std::to_string(trial));
    const std::size_t m = 1 + rng.below(4), n = 1 + rng.below(4);
    Tensor x = gaussian(rng, {m, n});
    Tensor other = gaussian(rng, {m, n});
    Tensor row = gaussian(rng, {n});
    Tensor weights = gaussian(rng, {m, n});
    Tensor positive = uniform(rng, {m, n}, 0.5, 2.0);
    Var w = Var::constant(weights);
    auto weigh = [&](const Var& v) { return reduce_sum(mul(v, w)); };
    CAPTURE(trial);

    CHECK(fd_error([&](const Var& v) { return weigh(add(v, Var::constant(row))); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(add(Var::constant(x), v)); }, row) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(sub(Var::constant(other), v)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(mul(v, Var::constant(row))); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(mul(Var::constant(x), v)); }, row) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(div(Var::constant(other), v)); }, positive) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(div(v, Var::constant(positive))); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(scale(v, -2.5)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(relu(v)); }, away_from_zero(x, 0.01)) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(exp(v)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(log(v)); }, positive) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(square(v)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return weigh(clamp_min(v, 0.0)); }, away_from_zero(x, 0.01)) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return reduce_sum(mul(transpose(v), transpose(w))); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return reduce_sum(mul(reshape(v, {m * n}), reshape(w, {m * n}))); }, x) <=
          1e-4);
    CHECK(fd_error([&](const Var& v) { return reduce_sum(mul(sum_batch(v), Var::constant(row))); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return mean(square(v)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return mse(v, Var::constant(other)); }, x) <= 1e-4);
    CHECK(fd_error([&](const Var& v) { return mse(Var::constant(other), v); }, x) <= 1e-4);

    std::vector<std::size_t> labels(m);
    for (auto& l : labels) l = rng.below(n);
    CHECK(fd_error([&](const Var& v) { return softmax_cross_entropy(v, labels); }, x) <= 1e-4);
  }
}

TEST_CASE("softmax cross-entropy value") {
  Tensor logits = Tensor::matrix({{0, 0}, {std::log(3.0), 0}});
  std::vector<std::size_t> labels{0, 0};
  double expected = 0.5 * (std::log(2.0) + std::log(4.0 / 3.0));
  CHECK(softmax_cross_entropy(Var::constant(logits), labels).value().item() == doctest::Approx(expected).epsilon(1e-12));
  std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS(softmax_cross_entropy(Var::constant(logits), bad));
}
