#include <doctest.h>

#include <cmath>

#include "layerlens/error.h"
#include "layerlens/model.h"
#include "layerlens/rng.h"
#include "layerlens/zoo.h"

using namespace layerlens;

namespace {

Tensor identity_matrix(std::size_t n) {
  Tensor m(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) m.at({i, i}) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("dense layer with overridden identity weights") {
  ModelGraph m = ModelGraph::build({LayerSpec::dense("fc", 4)}, {4}, 1);
  m.set_parameter("fc", "weight", identity_matrix(4));
  m.set_parameter("fc", "bias", Tensor::vector({1, 2, 3, 4}));
  Tensor x = Tensor::vector({0.5, -1, 2, 0});
  CHECK(forward(m, x) == Tensor::vector({1.5, 1, 5, 4}));
  Tensor w = Tensor::matrix({{1, 2, 0, 0}, {0, 1, 0, 0}, {0, 0, 3, 0}, {1, 0, 0, 1}});
  m.set_parameter("fc", "weight", w);
  CHECK(forward(m, x) == Tensor::vector({1 + (0.5 - 2), 2 - 1, 3 + 6, 4 + 0.5}));
}

TEST_CASE("conv chain output shape follows the size formula") {
  ModelGraph m = ModelGraph::build(
      {LayerSpec::conv("a", 5, 3, 1, 1), LayerSpec::conv("b", 6, 4, 2, 1), LayerSpec::conv("c", 2, 3, 1, 0)}, {3, 8, 8},
      0);
  CHECK(m.output_shape("a") == Shape{5, 8, 8});
  CHECK(m.output_shape("b") == Shape{6, (8 + 2 - 4) / 2 + 1, (8 + 2 - 4) / 2 + 1});
  CHECK(m.output_shape("c") == Shape{2, 2, 2});
  CHECK(forward(m, Tensor::ones({3, 8, 8})).shape() == Shape{2, 2, 2});
}

TEST_CASE("shape errors name the offending layer") {
  try {
    ModelGraph::build({LayerSpec::conv("ok", 4, 3, 1, 1), LayerSpec::conv("too_big", 4, 9)}, {1, 8, 8}, 0);
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("too_big") != std::string::npos);
  }
  CHECK_THROWS_AS(ModelGraph::build({LayerSpec::relu("r"), LayerSpec::relu("r")}, {2}, 0), ModelError);
  CHECK_THROWS_AS(ModelGraph::build({LayerSpec::relu("input")}, {2}, 0), ModelError);
}

TEST_CASE("same seed builds identical parameters") {
  ModelGraph a = make_architecture("tiny-cnn", {1, 8, 8}, 4, 17);
  ModelGraph b = make_architecture("tiny-cnn", {1, 8, 8}, 4, 17);
  ModelGraph c = make_architecture("tiny-cnn", {1, 8, 8}, 4, 18);
  REQUIRE(a.parameters().size() == b.parameters().size());
  bool all_same = true, any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    all_same = all_same && a.parameters()[i].value() == b.parameters()[i].value();
    any_diff = any_diff || !(a.parameters()[i].value() == c.parameters()[i].value());
  }
  CHECK(all_same);
  CHECK(any_diff);
}

TEST_CASE("he-uniform initialization bounds and zero biases") {
  ModelGraph m = ModelGraph::build({LayerSpec::dense("fc", 50)}, {24}, 3);
  const double limit = std::sqrt(6.0 / 24.0);
  CHECK(max_value(m.parameter("fc", "weight")) <= limit);
  CHECK(min_value(m.parameter("fc", "weight")) >= -limit);
  CHECK(max_value(m.parameter("fc", "weight")) > 0.8 * limit);
  CHECK(m.parameter("fc", "bias") == Tensor::zeros({50}));
}

TEST_CASE("forward_to the input layer is a passthrough") {
  ModelGraph m = make_architecture("tiny-cnn", {1, 8, 8}, 4, 0);
  RngStream rng(1);
  Tensor x = gaussian(rng, {1, 8, 8});
  CHECK(forward_to(m, x, kInputLayer) == x);
  CHECK_THROWS_AS(forward_to(m, x, "nope"), ModelError);
  CHECK_THROWS_AS(forward_to(m, Tensor::ones({1, 4, 4}), "conv1"), ShapeError);
}

TEST_CASE("all-relu identity network leaves non-negative input unchanged") {
  ModelGraph m = ModelGraph::build({LayerSpec::dense("a", 3), LayerSpec::relu("r1"), LayerSpec::dense("b", 3),
                                    LayerSpec::relu("r2")},
                                   {3}, 0);
  m.set_parameter("a", "weight", identity_matrix(3));
  m.set_parameter("b", "weight", identity_matrix(3));
  Tensor x = Tensor::vector({0, 1.5, 2});
  CHECK(forward(m, x) == x);
}

TEST_CASE("forward_to is a strict prefix of the full forward pass") {
  for (const char* arch : {"tiny-cnn", "tiny-resnet", "mlp"}) {
    CAPTURE(arch);
    ModelGraph m = make_architecture(arch, {1, 8, 8}, 4, 5);
    RngStream rng(2);
    Tensor x = gaussian(rng, {3, 1, 8, 8});
    CHECK(forward_to(m, x, m.last_layer()) == forward(m, x));
    Var full_input = Var::constant(x);
    for (const auto& name : m.layer_names()) {
      Tensor direct = forward_to(m, x, name);
      CHECK(direct.shape()[0] == 3);
      Shape unbatched(direct.shape().begin() + 1, direct.shape().end());
      CHECK(unbatched == m.output_shape(name));
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(slice_batch(forward(m, x), i) == forward(m, slice_batch(x, i)));
  }
}

TEST_CASE("forward is differentiable with respect to the input") {
  ModelGraph m = make_architecture("tiny-cnn", {1, 8, 8}, 4, 5);
  RngStream rng(3);
  Var x = Var::leaf(batched(gaussian(rng, {1, 8, 8})));
  Gradients g = backward(reduce_sum(m.forward(x, "relu3")));
  CHECK(g.of(x).shape() == x.shape());
}

TEST_CASE("residual blocks and upsampling shapes") {
  ModelGraph m = ModelGraph::build({LayerSpec::residual_block("r1", 4, true), LayerSpec::residual_block("r2", 2)},
                                   {3, 4, 4}, 0);
  CHECK(m.output_shape("r1") == Shape{4, 8, 8});
  CHECK(m.output_shape("r2") == Shape{2, 8, 8});
  CHECK(min_value(forward(m, Tensor::ones({3, 4, 4}))) >= 0.0);
}

TEST_CASE("set_parameter validates") {
  ModelGraph m = ModelGraph::build({LayerSpec::dense("fc", 2)}, {3}, 0);
  CHECK_THROWS_AS(m.set_parameter("fc", "weight", Tensor(Shape{3, 2})), ShapeError);
  CHECK_THROWS_AS(m.set_parameter("fc", "gamma", Tensor(Shape{2})), ModelError);
  Tensor bad(Shape{2}, std::nan(""));
  CHECK_THROWS_AS(m.set_parameter("fc", "bias", bad), NumericalError);
  ModelGraph copy = m;
  copy.set_parameter("fc", "bias", Tensor::vector({1, 1}));
  CHECK(m.parameter("fc", "bias") == Tensor::zeros({2}));
}
