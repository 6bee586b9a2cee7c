#include <doctest.h>

#include "layerlens/autodiff.h"
#include "layerlens/error.h"
#include "layerlens/rng.h"
#include "support/oracles.h"

using namespace layerlens;
using layerlens::testing::numeric_gradient;
using layerlens::testing::reference_conv;
using layerlens::testing::relative_error;

TEST_CASE("1x1 identity kernel leaves input unchanged") {
  RngStream rng(3);
  Tensor x = gaussian(rng, {2, 4, 5});
  Tensor k(Shape{2, 2, 1, 1});
  k.at({0, 0, 0, 0}) = 1;
  k.at({1, 1, 0, 0}) = 1;
  CHECK(conv2d(Var::constant(x), Var::constant(k)).value() == x);
}

TEST_CASE("all-ones 3x3 kernel on all-ones input") {
  Tensor y = conv2d(Var::constant(Tensor::ones({1, 3, 3})), Var::constant(Tensor::ones({1, 1, 3, 3}))).value();
  CHECK(y.shape() == Shape{1, 1, 1});
  CHECK(y[0] == 9);
}

TEST_CASE("conv2d output size and exact division") {
  Var x = Var::constant(Tensor::ones({1, 8, 8}));
  CHECK(conv2d(x, Var::constant(Tensor::ones({2, 1, 4, 4})), {2, 1}).value().shape() == Shape{2, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Var::constant(Tensor::ones({2, 1, 3, 3})), {2, 0}), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Var::constant(Tensor::ones({2, 1, 9, 9}))), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Var::constant(Tensor::ones({2, 3, 3, 3}))), ShapeError);
}

TEST_CASE("conv2d matches the direct definition") {
  RngStream rng(5);
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}}) {
    Tensor x = gaussian(rng, {2, 6, 6});
    Tensor k = gaussian(rng, {3, 2, stride == 2 ? 4u : 3u, stride == 2 ? 4u : 3u});
    Tensor y = conv2d(Var::constant(x), Var::constant(k), {stride, pad}).value();
    CHECK(max_abs_diff(y, reference_conv(x, k, stride, pad)) <= 1e-12);
  }
}

TEST_CASE("batched conv equals per-sample conv") {
  RngStream rng(6);
  Tensor x = gaussian(rng, {3, 2, 5, 5});
  Tensor k = gaussian(rng, {4, 2, 3, 3});
  Tensor y = conv2d(Var::constant(x), Var::constant(k), {1, 1}).value();
  for (std::size_t n = 0; n < 3; ++n)
    CHECK(slice_batch(y, n) == conv2d(Var::constant(slice_batch(x, n)), Var::constant(k), {1, 1}).value());
}

TEST_CASE("transpose_conv2d is the adjoint of conv2d for random shapes") {
  RngStream root(77);
  for (int trial = 0; trial < 25; ++trial) {
    RngStream rng = root.derive("adjoint" + std::to_string(trial));
    const std::size_t stride = 1 + rng.below(3);
    const std::size_t kernel = 1 + rng.below(4);
    const std::size_t pad = rng.below(kernel);
    const std::size_t out = 1 + rng.below(5);
    const long long signed_size = static_cast<long long>((out - 1) * stride + kernel) - 2 * static_cast<long long>(pad);
    if (signed_size < 1) continue;
    const std::size_t size = static_cast<std::size_t>(signed_size);
    const std::size_t C = 1 + rng.below(3), K = 1 + rng.below(3);
    Tensor x = gaussian(rng, {C, size, size});
    Tensor k = gaussian(rng, {K, C, kernel, kernel});
    Tensor y = gaussian(rng, {K, out, out});
    Tensor cx = conv2d(Var::constant(x), Var::constant(k), {stride, pad}).value();
    Tensor ty = transpose_conv2d(Var::constant(y), Var::constant(k), {stride, pad}).value();
    CAPTURE(trial);
    REQUIRE(cx.shape() == y.shape());
    REQUIRE(ty.shape() == x.shape());
    CHECK(std::abs(dot(cx, y) - dot(x, ty)) <= 1e-10 * std::max(1.0, std::abs(dot(cx, y))));
  }
}

TEST_CASE("conv gradients vs finite differences") {
  RngStream rng(8);
  Tensor x = gaussian(rng, {2, 6, 6});
  Tensor k = gaussian(rng, {3, 2, 4, 4});
  Tensor w = gaussian(rng, {3, 3, 3});
  ConvParams p{2, 1};
  auto loss = [&](const Tensor& xx, const Tensor& kk) {
    return dot(conv2d(Var::constant(xx), Var::constant(kk), p).value(), w);
  };
  Var vx = Var::leaf(x), vk = Var::leaf(k);
  Gradients g = backward(reduce_sum(mul(conv2d(vx, vk, p), Var::constant(w))));
  CHECK(relative_error(g.of(vk), numeric_gradient([&](const Tensor& t) { return loss(x, t); }, k)) <= 1e-5);
  CHECK(relative_error(g.of(vx), numeric_gradient([&](const Tensor& t) { return loss(t, k); }, x)) <= 1e-5);
}

TEST_CASE("transpose_conv gradients vs finite differences") {
  RngStream rng(9);
  Tensor y = gaussian(rng, {3, 3, 3});
  Tensor k = gaussian(rng, {3, 2, 4, 4});
  Tensor w = gaussian(rng, {2, 6, 6});
  ConvParams p{2, 1};
  auto loss = [&](const Tensor& yy, const Tensor& kk) {
    return dot(transpose_conv2d(Var::constant(yy), Var::constant(kk), p).value(), w);
  };
  Var vy = Var::leaf(y), vk = Var::leaf(k);
  Gradients g = backward(reduce_sum(mul(transpose_conv2d(vy, vk, p), Var::constant(w))));
  CHECK(relative_error(g.of(vk), numeric_gradient([&](const Tensor& t) { return loss(y, t); }, k)) <= 1e-5);
  CHECK(relative_error(g.of(vy), numeric_gradient([&](const Tensor& t) { return loss(t, k); }, y)) <= 1e-5);
}

TEST_CASE("composite conv-relu-mse gradient") {
  RngStream rng(10);
  Tensor x = gaussian(rng, {1, 2, 5, 5});
  Tensor k1 = gaussian(rng, {3, 2, 3, 3});
  Tensor k2 = gaussian(rng, {2, 3, 3, 3});
  Tensor target = gaussian(rng, {1, 2, 5, 5});
  auto net = [&](const Var& a, const Var& b) {
    return mse(conv2d(relu(conv2d(Var::constant(x), a, {1, 1})), b, {1, 1}), Var::constant(target));
  };
  Var v1 = Var::leaf(k1), v2 = Var::leaf(k2);
  Gradients g = backward(net(v1, v2));
  auto f1 = [&](const Tensor& t) { return net(Var::constant(t), Var::constant(k2)).value().item(); };
  auto f2 = [&](const Tensor& t) { return net(Var::constant(k1), Var::constant(t)).value().item(); };
  CHECK(relative_error(g.of(v1), numeric_gradient(f1, k1)) <= 1e-4);
  CHECK(relative_error(g.of(v2), numeric_gradient(f2, k2)) <= 1e-4);
}
