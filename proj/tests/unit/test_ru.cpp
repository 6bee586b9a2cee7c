#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "layerlens/error.h"
#include "layerlens/rng.h"
#include "layerlens/ru.h"
#include "layerlens/sigma_search.h"
#include "layerlens/zoo.h"
#include "support/constructions.h"
#include "support/oracles.h"

using namespace layerlens;
using namespace layerlens::testing;

namespace {

DecoderSpec fixed_decoder(ModelGraph graph, std::string layer) { return {std::move(graph), std::move(layer)}; }

// x = B z on a 2-d subspace of R^6
Dataset linear_manifold(std::size_t count, std::uint64_t seed) {
  RngStream rng(seed);
  Tensor b = gaussian(rng, {6, 2});
  Tensor z = gaussian(rng, {count, 2});
  Tensor x(Shape{count, 6});
  for (std::size_t k = 0; k < count; ++k)
    for (std::size_t i = 0; i < 6; ++i) x[k * 6 + i] = b.at({i, 0}) * z[k * 2] + b.at({i, 1}) * z[k * 2 + 1];
  return {x, Tensor(Shape{count}, 0.0), {}};
}

}  // namespace

TEST_CASE("decoder output shape equals input shape for every feature layer") {
  for (const char* arch : {"tiny-cnn", "tiny-resnet"}) {
    ModelGraph m = make_architecture(arch, {3, 8, 8}, 4, 1);
    for (const auto& name : m.layer_names()) {
      CAPTURE(name);
      ModelGraph g = ModelGraph::build(decoder_layers(m.output_shape(name), m.input_shape(), DecoderKind::automatic),
                                       m.output_shape(name), 2);
      CHECK(g.output_shape() == m.input_shape());
    }
  }
}

TEST_CASE("residual decoder upsamples with transposed convs") {
  auto specs = decoder_layers({16, 2, 2}, {3, 8, 8}, DecoderKind::residual);
  REQUIRE(specs.size() == 4);
  CHECK(specs[0].upsample);
  CHECK(specs[1].upsample);
  CHECK_FALSE(specs[2].upsample);
  CHECK(specs[3].kind == LayerKind::conv);
  CHECK_THROWS_AS(decoder_layers({16, 3, 3}, {3, 8, 8}, DecoderKind::residual), ConfigError);
  CHECK(decoder_layers({10}, {3, 8, 8}, DecoderKind::automatic).back().kind == LayerKind::reshape);
  CHECK_THROWS_AS(decoder_kind_from_string("fancy"), ConfigError);
}

TEST_CASE("linear decoder inverts a passthrough layer on a linear manifold") {
  ModelGraph h = identity_map(6);
  Dataset data = linear_manifold(200, 3);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.epochs = 150;
  cfg.batch_size = 20;
  DecoderSpec d = train_decoder(h, "map", data, cfg, DecoderKind::linear);
  CHECK(d.validation_mse <= 1e-4);
  CHECK(d.layer == "map");

  ModelGraph untrained = ModelGraph::build(decoder_layers({6}, {6}, DecoderKind::linear), {6}, 99);
  CHECK(reconstruction_mse(h, fixed_decoder(untrained, "map"), data) > reconstruction_mse(h, d, data));
}

TEST_CASE("least-squares decoder of a sum is the mean") {
  const std::size_t n = 4;
  RngStream rng(8);
  Dataset data{gaussian(rng, {400, n}), Tensor(Shape{400}, 0.0), {}};
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.epochs = 60;
  DecoderSpec d = train_decoder(sum_map(n), "map", data, cfg, DecoderKind::linear);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(d.graph.parameter("dec_out", "weight")[i] - 1.0 / n) <= 0.05);
}

TEST_CASE("perfect reconstruction gives pixel SID") {
  const std::size_t n = 5;
  RngStream rng(1);
  SigmaField sigma{uniform(rng, {n}, -4.0, -1.0)};
  Tensor x = uniform(rng, {n}, 0.0, 1.0);
  PixelRu r = pixel_ru(identity_map(n), fixed_decoder(identity_map(n), "map"), x, sigma, 1024, rng);
  CHECK(r.floored_units.empty());
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(r.H_hat_i[i] - (sigma.log_sigma[i] + kEntropyConstant)) <= 0.05);
}

TEST_CASE("constant decoder is floor-clamped and flagged") {
  const std::size_t n = 3;
  Tensor x = Tensor::vector({0.2, 0.4, 0.6});
  ModelGraph g = linear_map(Tensor(Shape{n, n}, 0.0));
  g.set_parameter("map", "bias", x);
  RngStream rng(2);
  PixelRu r = pixel_ru(identity_map(n), fixed_decoder(g, "map"), x, SigmaField::constant({n}, 0.1), 64, rng);
  CHECK(r.floored_units == std::vector<std::size_t>{0, 1, 2});
  for (double h : r.H_hat_i.data()) CHECK(h == ru_floor());
  CHECK(ru_floor() == doctest::Approx(std::log(1e-6) + kEntropyConstant));
}

TEST_CASE("sum network reconstruction matches the conditional-variance form") {
  const std::size_t n = 4;
  Tensor x = Tensor::vector({0.55, 0.45, 0.52, 0.48});
  ModelGraph g = linear_map(Tensor(Shape{n, 1}, 1.0 / n), "dec");
  RngStream rng(3);
  SigmaField sigma{Tensor::vector({std::log(0.02), std::log(0.01), std::log(0.03), std::log(0.015)})};
  PixelRu r = pixel_ru(sum_map(n), fixed_decoder(g, "map"), x, sigma, 1024, rng);
  double s2 = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s2 += std::exp(2 * sigma.log_sigma[i]);
    mean += x[i] / n;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double analytic = 0.5 * std::log((x[i] - mean) * (x[i] - mean) + s2 / (n * n)) + kEntropyConstant;
    CHECK(std::abs(r.H_hat_i[i] - analytic) <= 0.05);
  }
}

TEST_CASE("decoder shape mismatch is rejected") {
  RngStream rng(4);
  CHECK_THROWS_AS(pixel_ru(identity_map(3), fixed_decoder(identity_map(4), "map"), Tensor::vector({1, 2, 3}),
                           SigmaField::constant({3}, 0.1), 8, rng),
                  ShapeError);
}

TEST_CASE("ru loss gradient vs finite differences on a two-conv net") {
  ModelGraph h = ModelGraph::build({LayerSpec::conv("c1", 3, 3, 1, 1), LayerSpec::relu("r1"),
                                    LayerSpec::conv("c2", 2, 3, 1, 1)},
                                   {1, 5, 5}, 11);
  ModelGraph g = ModelGraph::build({LayerSpec::conv("d1", 1, 3, 1, 1)}, {2, 5, 5}, 12);
  DecoderSpec d = fixed_decoder(g, "c2");
  RngStream rng(5);
  Tensor x = uniform(rng, {1, 5, 5}, 0.0, 1.0);
  Tensor noise = noise_batch(rng, 8, {1, 5, 5});
  SigmaField sigma{uniform(rng, {1, 5, 5}, -3.0, -1.0)};
  LossAndGrad r = ru_loss(h, d, x, sigma, 0.3, 0.05, noise);
  Tensor numeric = numeric_gradient(
      [&](const Tensor& ls) { return ru_loss(h, d, x, SigmaField{ls}, 0.3, 0.05, noise).loss; }, sigma.log_sigma);
  CHECK(relative_error(r.grad, numeric) <= 1e-4);
}

TEST_CASE("estimate_ru equals estimate_sid under perfect reconstruction") {
  const std::size_t n = 6;
  RngStream rng(6);
  Tensor x = uniform(rng, {n}, 0.0, 1.0);
  ModelGraph h = identity_map(n);
  DecoderSpec d = fixed_decoder(identity_map(n), "map");
  SidConfig cfg;
  cfg.seed = 10;
  RuResult ru = estimate_ru(h, d, x, cfg);
  SidResult sid = estimate_sid(h, "map", x, cfg);
  CHECK(ru.conformant);
  CHECK(sid.conformant);
  for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ru.H_hat_i[i] - sid.H_i[i]) <= 0.05);
  CHECK(ru.H_hat_total == sum(ru.H_hat_i));
  for (double h_hat : ru.H_hat_i.data()) CHECK(h_hat >= ru_floor());
}

TEST_CASE("estimate_ru leaves the decoder untouched and is deterministic") {
  ModelGraph h = ModelGraph::build({LayerSpec::conv("c1", 2, 3, 1, 1), LayerSpec::relu("r1")}, {1, 4, 4}, 1);
  ModelGraph g = ModelGraph::build(decoder_layers({2, 4, 4}, {1, 4, 4}, DecoderKind::dense), {2, 4, 4}, 2);
  DecoderSpec d = fixed_decoder(g, "r1");
  std::vector<Tensor> before;
  for (const auto& p : d.graph.parameters()) before.push_back(p.value());
  RngStream rng(7);
  Tensor x = uniform(rng, {1, 4, 4}, 0.0, 1.0);
  SidConfig cfg;
  cfg.max_steps = 40;
  cfg.max_rounds = 3;
  RuResult a = estimate_ru(h, d, x, cfg);
  RuResult b = estimate_ru(h, d, x, cfg);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(d.graph.parameters()[i].value() == before[i]);
  CHECK(a.H_hat_i == b.H_hat_i);
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("sum network: RU stays high where SID is low") {
  const std::size_t n = 4;
  Tensor x = Tensor::vector({0.55, 0.45, 0.52, 0.48});
  ModelGraph h = sum_map(n);
  DecoderSpec d = fixed_decoder(linear_map(Tensor(Shape{n, 1}, 1.0 / n), "dec"), "map");
  SidConfig cfg;
  RuResult ru = estimate_ru(h, d, x, cfg);
  SidResult sid = estimate_sid(h, "map", x, cfg);
  CHECK(ru.conformant);
  CHECK(sid.conformant);
  CHECK(sum(ru.H_hat_i) / n - sum(sid.H_i) / n > 0.5);
}

TEST_CASE("decoder save and load") {
  DecoderSpec d{identity_map(3), "map", 0.125};
  auto dir = std::filesystem::temp_directory_path() / "layerlens_decoder_io";
  std::filesystem::remove_all(dir);
  save_decoder(d, dir);
  DecoderSpec back = load_decoder(dir);
  CHECK(back.layer == "map");
  CHECK(back.validation_mse == 0.125);
  CHECK(back.graph.parameter("map", "weight") == d.graph.parameter("map", "weight"));
  std::filesystem::remove_all(dir);
}
