#include <doctest.h>

#include <cmath>

#include "layerlens/dataset.h"
#include "layerlens/error.h"
#include "layerlens/rng.h"
#include "layerlens/train.h"
#include "layerlens/zoo.h"

using namespace layerlens;

TEST_CASE("linear regression recovers the least-squares slope") {
  RngStream rng(1);
  const std::size_t n = 64;
  Tensor x = uniform(rng, {n, 1}, -1.0, 1.0);
  Tensor y(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) y[i] = 2.0 * x[i];
  Dataset data{x, y, {}};
  ModelGraph m = ModelGraph::build({LayerSpec::dense("fc", 1)}, {1}, 3);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 0.2;
  cfg.batch_size = 16;
  cfg.epochs = 200;
  cfg.loss = LossKind::mse;
  TrainResult r = train(m, data, cfg);
  CHECK(std::abs(r.model.parameter("fc", "weight")[0] - 2.0) <= 1e-3);
  CHECK(std::abs(r.model.parameter("fc", "bias")[0]) <= 1e-3);
  CHECK(r.loss_trace.size() == 200);
  CHECK(r.loss_trace.back() < r.loss_trace.front());
}

TEST_CASE("separable blobs are learned") {
  Dataset data = make_blobs(100, 8.0, 4);
  ModelGraph m = make_architecture("mlp", {2}, 2, 5);
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 20;
  TrainResult r = train(m, data, cfg);
  CHECK(accuracy(r.model, data) >= 0.99);
}

TEST_CASE("zero epochs leave parameters unchanged") {
  Dataset data = make_blobs(10, 4.0, 1);
  ModelGraph m = make_architecture("mlp", {2}, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 0;
  TrainResult r = train(m, data, cfg);
  for (const auto& p : m.parameters()) CHECK(r.model.parameter(p.layer, p.name) == p.value());
  CHECK(r.loss_trace.empty());
}

TEST_CASE("training is deterministic and reports epochs") {
  Dataset data = make_shapes(64, 8, 2);
  ModelGraph m = make_architecture("tiny-cnn", {1, 8, 8}, 4, 5);
  TrainConfig cfg;
  cfg.epochs = 2;
  std::vector<std::size_t> seen;
  TrainResult a = train(m, data, cfg, [&](const ModelGraph&, std::size_t e, double) { seen.push_back(e); }, 3);
  TrainResult b = train(m, data, cfg, {}, 3);
  CHECK(seen == std::vector<std::size_t>{3, 4});
  CHECK(a.loss_trace == b.loss_trace);
  for (const auto& p : a.model.parameters()) CHECK(b.model.parameter(p.layer, p.name) == p.value());
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  Dataset empty;
  CHECK_THROWS(train(make_architecture("mlp", {2}, 2, 0), empty, TrainConfig{}));
}

TEST_CASE("divergence aborts with a diagnostic") {
  Dataset data = make_blobs(20, 4.0, 1);
  for (std::size_t i = 0; i < data.inputs.size(); ++i) data.inputs[i] *= 1e150;
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.learning_rate = 1e10;
  cfg.loss = LossKind::cross_entropy;
  CHECK_THROWS_AS(train(make_architecture("mlp", {2}, 2, 0), data, cfg), NumericalError);
}

TEST_CASE("synthetic shapes dataset") {
  Dataset d = make_shapes(40, 8, 3);
  CHECK(d.inputs.shape() == Shape{40, 1, 8, 8});
  CHECK(d.num_classes() == 4);
  CHECK(d.boxes.size() == 40);
  for (const auto& b : d.boxes) CHECK((b.x + b.w <= 8 && b.y + b.h <= 8 && b.w > 0 && b.h > 0));
  auto [train_part, val] = split(d, 0.25, 1);
  CHECK(train_part.size() == 30);
  CHECK(val.size() == 10);
}
