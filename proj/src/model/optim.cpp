#include "layerlens/optim.h"

#include <cmath>

#include "layerlens/error.h"

namespace layerlens {

namespace {
void check(std::span<Tensor> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter/gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != grads[i].shape()) throw ShapeError("optimizer: gradient shape mismatch");
  }
}
}  // namespace

void Sgd::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  check(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) p[j] -= lr_ * g[j];
  }
}

void Adam::step(std::span<Tensor> params, std::span<const Tensor> grads) {
  check(params, grads);
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  if (m_.size() != params.size()) throw Error("Adam: parameter set changed between steps");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      p[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

}  // namespace layerlens
