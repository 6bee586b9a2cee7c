#include "layerlens/sid.h"

#include <cmath>

#include "layerlens/error.h"
#include "layerlens/sigma_search.h"

namespace layerlens {

namespace {

Var sid_entropy(const Var& log_sigma, const Var&, const Var&) {
  const double n = static_cast<double>(log_sigma.value().size());
  return add(reduce_sum(log_sigma), Var::constant(Tensor::scalar(n * kEntropyConstant)));
}

void check_loss_inputs(double lambda, double delta_f_sq) {
  if (!(lambda >= 0.0)) throw NumericalError("sid_loss: lambda must be non-negative");
  if (!(delta_f_sq > 0.0)) throw DegenerateLayerError("sid_loss: delta_f^2 must be positive");
}

}  // namespace

double feature_baseline(const ModelGraph& model, std::string_view layer, const Tensor& x, double tau,
                        std::size_t samples, std::uint64_t seed) {
  if (!(tau > 0.0)) throw ConfigError("tau must be positive");
  if (samples == 0) throw ConfigError("baseline needs at least one sample");
  FeatureProbe probe(model, layer, x);
  RngStream rng = RngStream(seed).derive("baseline");
  const double delta_f_sq = probe.mean_deviation(Tensor(x.shape(), tau), stratified_gaussian(rng, samples, x.shape()));
  const Tensor& f = probe.feature();
  const double f_energy = dot(f, f) / static_cast<double>(f.size());
  if (!(delta_f_sq > 0.0) || delta_f_sq <= 1e-24 * f_energy) {
    throw DegenerateLayerError("degenerate layer '" + std::string(layer) +
                               "': feature does not respond to input noise (delta_f^2 = " +
                               std::to_string(delta_f_sq) + ")");
  }
  return delta_f_sq;
}

LossAndGrad sid_loss(const ModelGraph& model, std::string_view layer, const Tensor& x, const SigmaField& sigma,
                     double lambda, double delta_f_sq, const Tensor& noise) {
  check_loss_inputs(lambda, delta_f_sq);
  if (sigma.log_sigma.shape() != x.shape()) throw ShapeError("sigma field shape does not match the input");
  FeatureProbe probe(model, layer, x);
  Var leaf = Var::leaf(sigma.log_sigma);
  ObjectiveValue value = objective(probe, sid_entropy, leaf, noise, lambda, delta_f_sq);
  LossAndGrad out;
  out.loss = value.loss.value().item();
  out.deviation = value.deviation;
  out.grad = backward(value.loss).of(leaf);
  return out;
}

LossAndGrad sid_loss(const ModelGraph& model, std::string_view layer, const Tensor& x, const SigmaField& sigma,
                     double lambda, double delta_f_sq, std::size_t samples, RngStream& rng) {
  if (samples == 0) throw ConfigError("sid_loss needs at least one sample");
  return sid_loss(model, layer, x, sigma, lambda, delta_f_sq, noise_batch(rng, samples, x.shape()));
}

SidResult estimate_sid(const ModelGraph& model, std::string_view layer, const Tensor& x, const SidConfig& cfg) {
  cfg.validate();
  const double delta_f_sq = feature_baseline(model, layer, x, cfg.tau, cfg.baseline_samples, cfg.seed);
  FeatureProbe probe(model, layer, x);
  SearchOutcome found = search_sigma(probe, sid_entropy, delta_f_sq, cfg);

  SidResult r;
  r.log_sigma = found.log_sigma;
  r.H_i = SigmaField{found.log_sigma}.entropies();
  r.H_total = sum(r.H_i);
  r.epsilon_achieved = found.epsilon;
  r.epsilon_target = cfg.alpha * delta_f_sq;
  r.delta_f_sq = delta_f_sq;
  r.lambda_final = found.lambda;
  r.steps_used = found.steps;
  r.rounds_used = found.rounds;
  r.capped_units = std::move(found.capped_units);
  r.conformant = found.conformant;
  r.seed = cfg.seed;
  return r;
}

}  // namespace layerlens
