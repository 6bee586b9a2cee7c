#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "layerlens/tensor.h"

namespace layerlens {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Updates `params` in place from matching `grads`.
  virtual void step(std::span<Tensor> params, std::span<const Tensor> grads) = 0;
  virtual void set_learning_rate(double lr) = 0;
  virtual double learning_rate() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr) : lr_(lr) {}
  void step(std::span<Tensor> params, std::span<const Tensor> grads) override;
  void set_learning_rate(double lr) override { lr_ = lr; }
  double learning_rate() const override { return lr_; }

 private:
  double lr_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(std::span<Tensor> params, std::span<const Tensor> grads) override;
  void set_learning_rate(double lr) override { lr_ = lr; }
  double learning_rate() const override { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

}  // namespace layerlens
