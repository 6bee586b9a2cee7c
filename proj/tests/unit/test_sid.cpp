#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "layerlens/error.h"
#include "layerlens/rng.h"
#include "layerlens/sid.h"
#include "layerlens/sid_io.h"
#include "layerlens/sigma_search.h"
#include "layerlens/zoo.h"
#include "support/constructions.h"
#include "support/oracles.h"

using namespace layerlens;
using namespace layerlens::testing;

namespace {

SidConfig quick_config() {
  SidConfig cfg;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST_CASE("pixel entropy values") {
  CHECK(pixel_entropy(1.0) == doctest::Approx(0.5 * std::log(2 * M_PI * M_E)).epsilon(1e-15));
  CHECK(std::abs(pixel_entropy(1.0) - 1.418939) <= 1e-6);
  CHECK(std::abs(pixel_entropy(M_E) - 2.418939) <= 1e-6);
  CHECK(std::abs(pixel_entropy(0.1) - (-0.883646)) <= 1e-6);
  CHECK_THROWS_AS(pixel_entropy(0.0), NumericalError);
  CHECK_THROWS_AS(pixel_entropy(-1.0), NumericalError);
}

TEST_CASE("pixel entropy is strictly increasing") {
  double prev = pixel_entropy(1e-8);
  for (double s = 2e-8; s < 1e4; s *= 1.7) {
    double h = pixel_entropy(s);
    CHECK(h > prev);
    prev = h;
  }
}

TEST_CASE("sigma field") {
  SigmaField f = SigmaField::constant({2, 2}, 0.5);
  CHECK(max_abs_diff(f.sigma(), Tensor({2, 2}, 0.5)) <= 1e-15);
  CHECK(f.entropies()[3] == doctest::Approx(pixel_entropy(0.5)).epsilon(1e-14));
}

TEST_CASE("baseline on the identity map is n tau^2") {
  const double tau = 0.01;
  double d = feature_baseline(identity_map(6), "map", Tensor::vector({1, 2, 3, 4, 5, 6}), tau, 1000, 7);
  CHECK(std::abs(d - 6 * tau * tau) <= 0.05 * 6 * tau * tau);
}

TEST_CASE("baseline on a linear map is tau^2 ||A||_F^2") {
  RngStream rng(4);
  Tensor a = gaussian(rng, {3, 5});
  const double tau = 0.02;
  double d = feature_baseline(linear_map(a), "map", Tensor(Shape{5}, 0.3), tau, 1000, 8);
  const double expected = tau * tau * dot(a, a);
  CHECK(std::abs(d - expected) <= 0.05 * expected);
}

TEST_CASE("constant network is a degenerate layer") {
  ModelGraph m = linear_map(Tensor(Shape{2, 3}, 0.0));
  m.set_parameter("map", "bias", Tensor::vector({1, -1}));
  CHECK_THROWS_AS(feature_baseline(m, "map", Tensor::vector({1, 2, 3}), 0.01, 100, 0), DegenerateLayerError);
  CHECK_THROWS_AS(estimate_sid(m, "map", Tensor::vector({1, 2, 3}), SidConfig{}), DegenerateLayerError);
}

TEST_CASE("sid loss without the entropy term is the normalized deviation") {
  RngStream rng(1);
  Tensor x = Tensor::vector({0.2, -0.1, 0.4});
  LossAndGrad r = sid_loss(identity_map(3), "map", x, SigmaField::constant({3}, 0.3), 0.0, 0.5, 16, rng);
  CHECK(r.loss >= 0.0);
  CHECK(r.loss == doctest::Approx(r.deviation / 0.5).epsilon(1e-14));
}

TEST_CASE("sid loss on the identity map matches its closed form") {
  const std::size_t n = 4, samples = 64;
  const double s = 0.07, lambda = 0.3, delta = 4e-4;
  RngStream rng(2);
  Tensor noise = noise_batch(rng, samples, {n});
  LossAndGrad r = sid_loss(identity_map(n), "map", Tensor(Shape{n}, 0.5), SigmaField::constant({n}, s), lambda,
                           delta, noise);
  Tensor grad(Shape{n});
  double energy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double m2 = 0.0;
    for (std::size_t k = 0; k < samples; ++k) m2 += noise[k * n + i] * noise[k * n + i];
    m2 /= samples;
    energy += m2;
    grad[i] = 2.0 * s * s * m2 / delta - lambda;
  }
  const double loss = s * s * energy / delta - lambda * n * (std::log(s) + kEntropyConstant);
  CHECK(std::abs(r.loss - loss) <= 1e-10 * std::abs(loss));
  CHECK(relative_error(r.grad, grad) <= 1e-4);

  RngStream big(3);
  LossAndGrad expected = sid_loss(identity_map(n), "map", Tensor(Shape{n}, 0.5), SigmaField::constant({n}, s),
                                  lambda, delta, 20000, big);
  const double analytic = n * s * s / delta - lambda * n * (std::log(s) + kEntropyConstant);
  CHECK(std::abs(expected.loss - analytic) <= 0.03 * std::abs(n * s * s / delta));
}

TEST_CASE("sid loss gradient vs finite differences on a two-layer net") {
  ModelGraph m = ModelGraph::build({LayerSpec::conv("c1", 3, 3, 1, 1), LayerSpec::relu("r1"),
                                    LayerSpec::conv("c2", 2, 3, 1, 1)},
                                   {1, 5, 5}, 11);
  RngStream rng(5);
  Tensor x = uniform(rng, {1, 5, 5}, 0.0, 1.0);
  Tensor noise = noise_batch(rng, 8, {1, 5, 5});
  SigmaField sigma{uniform(rng, {1, 5, 5}, -3.0, -1.0)};
  const double lambda = 0.2, delta = 0.05;
  LossAndGrad r = sid_loss(m, "c2", x, sigma, lambda, delta, noise);
  Tensor numeric = numeric_gradient(
      [&](const Tensor& ls) { return sid_loss(m, "c2", x, SigmaField{ls}, lambda, delta, noise).loss; },
      sigma.log_sigma);
  CHECK(relative_error(r.grad, numeric) <= 1e-4);
}

TEST_CASE("lambda_adapt direction and fixed point") {
  CHECK(lambda_adapt(0.7, 2.0, 2.0) == 0.7);
  CHECK(lambda_adapt(0.7, 1.0, 2.0) > 0.7);
  CHECK(lambda_adapt(0.7, 3.0, 2.0) < 0.7);
  CHECK(lambda_adapt(1.0, 1e-9, 2.0) == 2.0);
  CHECK(lambda_adapt(1.0, 1e9, 2.0) == 0.5);
}

TEST_CASE("lambda search brackets then bisects") {
  LambdaSearch s(1.0, 10.0, 0.05);
  s.update(1.0);
  CHECK(s.lambda() == 2.0);
  CHECK_FALSE(s.bracketed());
  s.update(20.0);
  CHECK(s.bracketed());
  CHECK(s.lambda() == doctest::Approx(std::sqrt(2.0)));
  CHECK(s.within_tolerance(10.4));
  CHECK_FALSE(s.within_tolerance(10.6));
}

TEST_CASE("identity map with target epsilon 0.04") {
  SidConfig cfg = quick_config();
  cfg.tau = 0.1;
  cfg.alpha = 1.0;
  Tensor x = Tensor::vector({0.3, -0.2, 0.5, 0.1});
  SidResult r = estimate_sid(identity_map(4), "map", x, cfg);
  CHECK(r.conformant);
  CHECK(std::abs(r.epsilon_achieved - cfg.alpha * r.delta_f_sq) <= 0.05 * cfg.alpha * r.delta_f_sq);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(r.H_i[i] - (-0.883646)) <= 0.05);
  CHECK(std::abs(r.H_total - (-3.534585)) <= 0.2);
  CHECK(r.H_total == sum(r.H_i));
  CHECK(r.rounds_used <= 20);
  CHECK(r.capped_units.empty());
}

TEST_CASE("lambda adaptation converges from a poor start") {
  SidConfig cfg = quick_config();
  cfg.lambda_init = 1e-3;
  SidResult r = estimate_sid(identity_map(4), "map", Tensor::vector({1, 2, 3, 4}), cfg);
  CHECK(r.conformant);
  CHECK(r.rounds_used <= 20);
  CHECK(r.rounds_used > 1);
}

TEST_CASE("linear map with distinct column norms") {
  Tensor a = Tensor::matrix({{1.0, 0.0, 0.5}, {0.0, 2.0, 0.0}, {0.0, 0.0, 3.0}});
  SidConfig cfg = quick_config();
  SidResult r = estimate_sid(linear_map(a), "map", Tensor::vector({0.1, 0.2, 0.3}), cfg);
  REQUIRE(r.conformant);
  std::vector<double> norms = column_norms_sq(a);
  for (std::size_t i = 0; i < 3; ++i) {
    const double analytic = 0.5 * std::log(r.epsilon_achieved / 3.0) - 0.5 * std::log(norms[i]) + kEntropyConstant;
    CHECK(std::abs(r.H_i[i] - analytic) <= 0.05);
  }
}

TEST_CASE("dead input unit reaches the cap") {
  Tensor a = Tensor::matrix({{1.0, 0.0, 0.3}, {0.2, 0.0, 1.0}});
  SidConfig cfg = quick_config();
  cfg.sigma_cap = 2.0;
  SidResult r = estimate_sid(linear_map(a), "map", Tensor::vector({0.1, 0.5, 0.9}), cfg);
  CHECK(r.capped_units == std::vector<std::size_t>{1});
  CHECK(r.H_i[1] == doctest::Approx(std::log(2.0) + kEntropyConstant).epsilon(1e-12));
  CHECK(r.conformant);
}

TEST_CASE("default cap is ten times the input range") {
  SidConfig cfg;
  CHECK(sigma_cap_for(Tensor::vector({0.1, 0.6}), cfg) == doctest::Approx(5.0));
  CHECK(sigma_cap_for(Tensor::vector({0.3, 0.3}), cfg) == 10.0);
  cfg.sigma_cap = 3.0;
  CHECK(sigma_cap_for(Tensor::vector({0.1, 0.6}), cfg) == 3.0);
}

TEST_CASE("estimate_sid is deterministic per seed") {
  SidConfig cfg = quick_config();
  cfg.max_steps = 40;
  Tensor x = Tensor::vector({0.3, -0.2, 0.5});
  Tensor a = Tensor::matrix({{1, 2, 0}, {0, 1, 1}});
  SidResult r1 = estimate_sid(linear_map(a), "map", x, cfg);
  SidResult r2 = estimate_sid(linear_map(a), "map", x, cfg);
  CHECK(r1.H_i == r2.H_i);
  CHECK(r1.epsilon_achieved == r2.epsilon_achieved);
  CHECK(to_json(r1) == to_json(r2));
  cfg.seed = 4;
  SidResult r3 = estimate_sid(linear_map(a), "map", x, cfg);
  CHECK_FALSE(r3.H_i == r1.H_i);
}

TEST_CASE("estimate_sid on a conv layer of tiny-cnn") {
  ModelGraph m = make_architecture("tiny-cnn", {1, 8, 8}, 4, 2);
  RngStream rng(6);
  Tensor x = uniform(rng, {1, 8, 8}, 0.0, 1.0);
  SidConfig cfg = quick_config();
  cfg.max_steps = 100;
  SidResult r = estimate_sid(m, "relu2", x, cfg);
  CHECK(r.H_i.shape() == x.shape());
  CHECK(r.conformant);
  CHECK(r.H_total == sum(r.H_i));
}

TEST_CASE("config validation and json") {
  SidConfig cfg;
  cfg.lambda_tolerance = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.samples_per_step = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  SidConfig parsed = sid_config_from_json({{"alpha", 2.0}, {"seed", 9}});
  CHECK(parsed.alpha == 2.0);
  CHECK(parsed.tau == 0.01);
  CHECK(parsed.seed == 9);
  CHECK(sid_config_from_json(to_json(parsed)).max_steps == parsed.max_steps);
  CHECK_THROWS_AS(sid_config_from_json({{"alhpa", 2.0}}), ConfigError);
  CHECK_THROWS_AS(sid_config_from_json({{"alpha", "big"}}), ConfigError);
  CHECK_THROWS_AS(sid_config_from_json({{"alpha", -1.0}}), ConfigError);
}

TEST_CASE("sid result files round trip") {
  SidConfig cfg = quick_config();
  cfg.max_steps = 20;
  cfg.max_rounds = 2;
  SidResult r = estimate_sid(identity_map(3), "map", Tensor::vector({1, 2, 3}), cfg);
  auto dir = std::filesystem::temp_directory_path() / "layerlens_sid_io";
  std::filesystem::create_directories(dir);
  write_sid_result(r, dir / "cell");
  SidResult back = read_sid_result(dir / "cell");
  CHECK(back.H_i == r.H_i);
  CHECK(back.log_sigma == r.log_sigma);
  CHECK(back.H_total == r.H_total);
  CHECK(back.conformant == r.conformant);
  CHECK(to_json(back) == to_json(r));
  std::filesystem::remove_all(dir);
}
