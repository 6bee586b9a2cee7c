#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "layerlens/autodiff.h"
#include "layerlens/model.h"
#include "layerlens/rng.h"
#include "layerlens/tensor.h"

namespace layerlens {

/// Differential entropy offset of a unit Gaussian, 0.5 * ln(2 * pi * e), in nats.
inline constexpr double kEntropyConstant = 1.4189385332046727;

/// Entropy of N(mu, sigma^2) in nats. Throws NumericalError unless sigma > 0.
double pixel_entropy(double sigma);

/// One perturbation scale per input unit, stored as log sigma.
struct SigmaField {
  Tensor log_sigma;

  static SigmaField constant(const Shape& shape, double sigma);
  Tensor sigma() const;
  /// Per-unit entropies ln(sigma_i) + C.
  Tensor entropies() const;
};

struct SidConfig {
  double alpha = 1.5;
  double tau = 0.01;
  std::size_t samples_per_step = 32;
  std::size_t max_steps = 200;   ///< inner Adam steps per lambda round
  std::size_t max_rounds = 30;   ///< lambda rounds before giving up
  double sigma_lr = 0.05;
  double lambda_init = 0.0;      ///< 0 selects 2 * alpha / n
  double lambda_tolerance = 0.05;
  double sigma_cap = 0.0;        ///< 0 selects 10 x the input's dynamic range
  std::size_t baseline_samples = 1024;
  std::size_t eval_samples = 1024;
  /// false runs the diagnostic variant: no division by delta_f^2 and a fixed lambda.
  bool normalize = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct SidResult {
  Tensor H_i;
  double H_total = 0.0;
  Tensor log_sigma;
  double epsilon_achieved = 0.0;
  double epsilon_target = 0.0;
  double delta_f_sq = 0.0;
  double lambda_final = 0.0;
  std::size_t steps_used = 0;
  std::size_t rounds_used = 0;
  std::vector<std::size_t> capped_units;
  bool conformant = false;
  std::uint64_t seed = 0;
};

/// Monte Carlo mean of ||h(x + tau * delta) - h(x)||^2 over `samples` draws.
/// Throws DegenerateLayerError when the feature does not respond to noise.
double feature_baseline(const ModelGraph& model, std::string_view layer, const Tensor& x, double tau,
                        std::size_t samples, std::uint64_t seed);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;             ///< d loss / d log_sigma
  double deviation = 0.0;  ///< sample mean of ||h(x') - f||^2
};

/// (1/delta_f^2) * mean_s ||h(x + sigma * noise_s) - f||^2 - lambda * sum_i (ln sigma_i + C)
/// on the given draws `noise` [S, x...].
LossAndGrad sid_loss(const ModelGraph& model, std::string_view layer, const Tensor& x, const SigmaField& sigma,
                     double lambda, double delta_f_sq, const Tensor& noise);
/// Same, with `samples` fresh draws from `rng`.
LossAndGrad sid_loss(const ModelGraph& model, std::string_view layer, const Tensor& x, const SigmaField& sigma,
                     double lambda, double delta_f_sq, std::size_t samples, RngStream& rng);

/// One multiplicative step: lambda * clamp(target / epsilon, 0.5, 2).
double lambda_adapt(double lambda, double epsilon, double target);

/// Outer search on lambda: multiplicative steps until the target is straddled,
/// then geometric bisection inside the bracket.
class LambdaSearch {
 public:
  LambdaSearch(double lambda, double target, double tolerance);
  double lambda() const { return lambda_; }
  bool within_tolerance(double epsilon) const;
  bool bracketed() const { return lo_ > 0.0 && hi_ > 0.0; }
  /// Records epsilon at the current lambda and moves to the next lambda.
  double update(double epsilon);

 private:
  double lambda_, target_, tolerance_;
  double lo_ = 0.0, hi_ = 0.0;
};

/// Maximum-entropy perturbation under E||h(x') - f||^2 = alpha * delta_f^2.
/// A run that misses the tolerance is returned with conformant = false.
SidResult estimate_sid(const ModelGraph& model, std::string_view layer, const Tensor& x, const SidConfig& cfg);

}  // namespace layerlens
