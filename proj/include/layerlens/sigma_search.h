#pragma once

// Machinery shared by the SID and RU estimators: a perturbed-input feature
// probe and the inner/outer optimization of log sigma.

#include <functional>
#include <string>
#include <string_view>

#include "layerlens/autodiff.h"
#include "layerlens/model.h"
#include "layerlens/sid.h"

namespace layerlens {

class FeatureProbe {
 public:
  FeatureProbe(const ModelGraph& model, std::string_view layer, Tensor x);

  const ModelGraph& model() const { return *model_; }
  const std::string& layer() const { return layer_; }
  const Tensor& x() const { return x_; }
  /// Unperturbed feature f = h(x).
  const Tensor& feature() const { return f_; }
  std::size_t units() const { return x_.size(); }

  /// x + exp(log_sigma) * noise, batched over noise's leading axis.
  Var perturbed(const Var& log_sigma, const Tensor& noise) const;
  Var features(const Var& x_prime) const;
  /// sum ||h(x') - f||^2 over the batch, as a graph node.
  Var squared_deviation(const Var& features) const;
  /// Mean ||h(x + sigma * noise_s) - f||^2 over all draws, evaluated in chunks.
  double mean_deviation(const Tensor& sigma, const Tensor& noise) const;

 private:
  const ModelGraph* model_;
  std::string layer_;
  Tensor x_;
  Tensor f_;
};

/// Entropy term E(sigma) of the objective (1/delta^2) * deviation - lambda * E.
using EntropyTerm = std::function<Var(const Var& log_sigma, const Var& x_prime, const Var& features)>;

struct ObjectiveValue {
  Var loss;
  double deviation = 0.0;
};

ObjectiveValue objective(const FeatureProbe& probe, const EntropyTerm& entropy, const Var& log_sigma,
                         const Tensor& noise, double lambda, double delta_f_sq);

struct SearchOutcome {
  Tensor log_sigma;
  double lambda = 0.0;
  double epsilon = 0.0;
  std::size_t steps = 0;
  std::size_t rounds = 0;
  bool conformant = false;
  std::vector<std::size_t> capped_units;
};

/// Largest sigma allowed by cfg (10 x the input range when unset).
double sigma_cap_for(const Tensor& x, const SidConfig& cfg);

/// Draws [samples, shape...] standard normals, identical for identical (rng, shape).
Tensor noise_batch(RngStream& rng, std::size_t samples, const Shape& shape);

/// Held-out certification draws for cfg.seed: cfg.eval_samples stratified
/// normals, identical on every call.
Tensor held_out_noise(const SidConfig& cfg, const Shape& shape);

/// Adam on log sigma inside, LambdaSearch outside; epsilon is certified on
/// cfg.eval_samples held-out draws that stay fixed across rounds.
SearchOutcome search_sigma(const FeatureProbe& probe, const EntropyTerm& entropy, double delta_f_sq,
                           const SidConfig& cfg);

}  // namespace layerlens
