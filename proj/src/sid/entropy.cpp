#include <cmath>

#include "layerlens/error.h"
#include "layerlens/sid.h"

namespace layerlens {

double pixel_entropy(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw NumericalError("pixel_entropy: sigma must be positive and finite, got " + std::to_string(sigma));
  }
  return std::log(sigma) + kEntropyConstant;
}

SigmaField SigmaField::constant(const Shape& shape, double sigma) {
  if (!(sigma > 0.0)) throw NumericalError("sigma must be positive");
  return {Tensor(shape, std::log(sigma))};
}

Tensor SigmaField::sigma() const {
  Tensor s = log_sigma;
  for (double& v : s.data()) v = std::exp(v);
  return s;
}

Tensor SigmaField::entropies() const {
  Tensor h = log_sigma;
  for (double& v : h.data()) v += kEntropyConstant;
  return h;
}

void SidConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(alpha > 0.0 && std::isfinite(alpha), "alpha must be positive");
  require(tau > 0.0 && std::isfinite(tau), "tau must be positive");
  require(samples_per_step >= 1, "samples_per_step must be at least 1");
  require(max_steps >= 1, "max_steps must be at least 1");
  require(max_rounds >= 1, "max_rounds must be at least 1");
  require(sigma_lr > 0.0 && std::isfinite(sigma_lr), "sigma_lr must be positive");
  require(lambda_init >= 0.0 && std::isfinite(lambda_init), "lambda_init must be non-negative (0 = automatic)");
  require(lambda_tolerance > 0.0 && lambda_tolerance < 1.0, "lambda_tolerance must lie in (0, 1)");
  require(sigma_cap >= 0.0 && std::isfinite(sigma_cap), "sigma_cap must be non-negative (0 = automatic)");
  require(baseline_samples >= 1, "baseline_samples must be at least 1");
  require(eval_samples >= 1, "eval_samples must be at least 1");
}

}  // namespace layerlens
