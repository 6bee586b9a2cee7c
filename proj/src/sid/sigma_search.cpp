#include "layerlens/sigma_search.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "layerlens/error.h"
#include "layerlens/optim.h"

namespace layerlens {

namespace {

constexpr std::size_t kEvalChunk = 128;

Shape batch_shape(std::size_t samples, const Shape& shape) {
  Shape s{samples};
  s.insert(s.end(), shape.begin(), shape.end());
  return s;
}

// Constant for the first half, then a cosine decay to a tenth.
double learning_rate_at(double lr, std::size_t step, std::size_t total) {
  const std::size_t flat = total / 2;
  if (step < flat) return lr;
  const double t = static_cast<double>(step - flat) / static_cast<double>(std::max<std::size_t>(1, total - flat));
  return lr * (0.1 + 0.45 * (1.0 + std::cos(std::numbers::pi * t)));
}

}  // namespace

FeatureProbe::FeatureProbe(const ModelGraph& model, std::string_view layer, Tensor x)
    : model_(&model), layer_(layer), x_(std::move(x)) {
  if (x_.shape() != model.input_shape()) {
    throw ShapeError("input shape " + to_string(x_.shape()) + " does not match model input " +
                     to_string(model.input_shape()));
  }
  f_ = forward_to(model, x_, layer_);
}

Var FeatureProbe::perturbed(const Var& log_sigma, const Tensor& noise) const {
  return add(Var::constant(x_), mul(exp(log_sigma), Var::constant(noise)));
}

Var FeatureProbe::features(const Var& x_prime) const { return model_->forward(x_prime, layer_); }

Var FeatureProbe::squared_deviation(const Var& features) const {
  return reduce_sum(square(sub(features, Var::constant(f_))));
}

double FeatureProbe::mean_deviation(const Tensor& sigma, const Tensor& noise) const {
  const std::size_t samples = noise.shape()[0];
  const std::size_t unit = x_.size();
  double total = 0.0;
  for (std::size_t start = 0; start < samples; start += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, samples - start);
    Tensor xp(batch_shape(count, x_.shape()));
    for (std::size_t s = 0; s < count; ++s)
      for (std::size_t i = 0; i < unit; ++i) xp[s * unit + i] = x_[i] + sigma[i] * noise[(start + s) * unit + i];
    total += squared_deviation(features(Var::constant(std::move(xp)))).value().item();
  }
  return total / static_cast<double>(samples);
}

ObjectiveValue objective(const FeatureProbe& probe, const EntropyTerm& entropy, const Var& log_sigma,
                         const Tensor& noise, double lambda, double delta_f_sq) {
  const double samples = static_cast<double>(noise.shape()[0]);
  Var xp = probe.perturbed(log_sigma, noise);
  Var feats = probe.features(xp);
  Var deviation = scale(probe.squared_deviation(feats), 1.0 / samples);
  Var loss = sub(scale(deviation, 1.0 / delta_f_sq), scale(entropy(log_sigma, xp, feats), lambda));
  return {loss, deviation.value().item()};
}

double sigma_cap_for(const Tensor& x, const SidConfig& cfg) {
  if (cfg.sigma_cap > 0.0) return cfg.sigma_cap;
  const double range = max_value(x) - min_value(x);
  return range > 0.0 ? 10.0 * range : 10.0;
}

Tensor noise_batch(RngStream& rng, std::size_t samples, const Shape& shape) {
  return gaussian(rng, batch_shape(samples, shape));
}

Tensor held_out_noise(const SidConfig& cfg, const Shape& shape) {
  RngStream rng = RngStream(cfg.seed).derive("sigma-eval");
  return stratified_gaussian(rng, cfg.eval_samples, shape);
}

double lambda_adapt(double lambda, double epsilon, double target) {
  if (!(lambda > 0.0)) throw NumericalError("lambda must be positive");
  if (epsilon == target) return lambda;
  if (!(epsilon > 0.0)) return 2.0 * lambda;
  return lambda * std::clamp(target / epsilon, 0.5, 2.0);
}

LambdaSearch::LambdaSearch(double lambda, double target, double tolerance)
    : lambda_(lambda), target_(target), tolerance_(tolerance) {
  if (!(lambda > 0.0)) throw NumericalError("lambda must be positive");
}

bool LambdaSearch::within_tolerance(double epsilon) const {
  return std::abs(epsilon - target_) <= tolerance_ * target_;
}

double LambdaSearch::update(double epsilon) {
  if (epsilon < target_) {
    lo_ = std::max(lo_, lambda_);
  } else if (epsilon > target_) {
    hi_ = hi_ > 0.0 ? std::min(hi_, lambda_) : lambda_;
  } else {
    return lambda_;
  }
  lambda_ = bracketed() ? std::sqrt(lo_ * hi_) : lambda_adapt(lambda_, epsilon, target_);
  return lambda_;
}

SearchOutcome search_sigma(const FeatureProbe& probe, const EntropyTerm& entropy, double delta_f_sq,
                           const SidConfig& cfg) {
  cfg.validate();
  const Shape& shape = probe.x().shape();
  const std::size_t n = probe.units();
  const double target = cfg.alpha * delta_f_sq;
  const double normalizer = cfg.normalize ? delta_f_sq : 1.0;
  const double log_cap = std::log(sigma_cap_for(probe.x(), cfg));

  const Tensor eval_noise = held_out_noise(cfg, shape);

  const Tensor start(shape, std::min(std::log(cfg.tau), log_cap));
  LambdaSearch search(cfg.lambda_init > 0.0 ? cfg.lambda_init : 2.0 * cfg.alpha / static_cast<double>(n), target,
                      cfg.lambda_tolerance);
  const std::size_t rounds = cfg.normalize ? cfg.max_rounds : 1;

  SearchOutcome best;
  double best_gap = std::numeric_limits<double>::infinity();
  std::size_t steps = 0;
  const std::size_t tail = std::max<std::size_t>(1, cfg.max_steps / 2);

  for (std::size_t round = 1; round <= rounds; ++round) {
    const double lambda = search.lambda();
    RngStream train_rng = RngStream(cfg.seed).derive("sigma-steps");
    Tensor log_sigma = start;
    Adam adam(cfg.sigma_lr);
    Tensor average(shape);
    for (std::size_t step = 0; step < cfg.max_steps; ++step) {
      adam.set_learning_rate(learning_rate_at(cfg.sigma_lr, step, cfg.max_steps));
      Var leaf = Var::leaf(log_sigma);
      ObjectiveValue value =
          objective(probe, entropy, leaf, noise_batch(train_rng, cfg.samples_per_step, shape), lambda, normalizer);
      Tensor grad = backward(value.loss).of(leaf);
      adam.step(std::span<Tensor>(&log_sigma, 1), std::span<const Tensor>(&grad, 1));
      for (double& v : log_sigma.data()) v = std::min(v, log_cap);
      if (step + tail >= cfg.max_steps) {
        for (std::size_t i = 0; i < n; ++i) average[i] += log_sigma[i];
      }
      ++steps;
    }
    // Polyak average over the decay phase; units sitting at the cap stay pinned there.
    for (std::size_t i = 0; i < n; ++i) {
      average[i] = log_sigma[i] >= log_cap ? log_cap : std::min(average[i] / static_cast<double>(tail), log_cap);
    }

    Tensor sigma = average;
    for (double& v : sigma.data()) v = std::exp(v);
    const double epsilon = probe.mean_deviation(sigma, eval_noise);
    const double gap = std::abs(epsilon - target);
    if (gap < best_gap) {
      best_gap = gap;
      best.log_sigma = average;
      best.lambda = lambda;
      best.epsilon = epsilon;
    }
    best.rounds = round;
    if (search.within_tolerance(epsilon)) break;
    search.update(epsilon);
  }

  best.steps = steps;
  best.conformant = search.within_tolerance(best.epsilon);
  for (std::size_t i = 0; i < n; ++i) {
    if (best.log_sigma[i] >= log_cap - 1e-9) best.capped_units.push_back(i);
  }
  return best;
}

}  // namespace layerlens
