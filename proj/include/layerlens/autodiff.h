#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "layerlens/tensor.h"

namespace layerlens {

namespace detail {
struct Node;
}

class Gradients;

/// Handle to a value in a reverse-mode differentiation graph. Results of ops
/// on constants are constants; nothing is recorded unless an input requires a
/// gradient.
class Var {
 public:
  Var();
  static Var constant(Tensor value);
  /// Leaf that receives a gradient in backward().
  static Var leaf(Tensor value);

  const Tensor& value() const;
  const Shape& shape() const;
  bool requires_grad() const;

 private:
  friend class Gradients;
  friend Gradients backward(const Var& loss);
  friend Var make_op(Tensor value, std::vector<Var> inputs,
                     std::function<std::vector<Tensor>(const Tensor&, const std::vector<bool>&)> rule,
                     std::string_view op_name);

  explicit Var(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Local gradient rule: maps the output gradient to one gradient per input.
/// Entries for inputs whose flag is false may be left empty.
using GradientRule = std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& wanted)>;

/// Records an op result. Throws NumericalError if `value` is not finite.
Var make_op(Tensor value, std::vector<Var> inputs, GradientRule rule, std::string_view op_name);

/// Gradients of a scalar loss with respect to every leaf reached.
class Gradients {
 public:
  const Tensor& of(const Var& leaf) const;
  bool contains(const Var& leaf) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend Gradients backward(const Var& loss);
  std::unordered_map<const detail::Node*, Tensor> grads_;
};

/// Reverse sweep from a single-element loss. Interior nodes drop their
/// recorded inputs afterwards, so a graph can be swept once.
Gradients backward(const Var& loss);

// ---------------------------------------------------------------------------
// Differentiable ops. Binary elementwise ops broadcast over trailing
// dimensions (a size-1 or missing leading dim stretches).

enum class BinaryOp { add, sub, mul, div };

Shape broadcast_shape(const Shape& a, const Shape& b);
/// Sums `t` down to `target` (the reverse of broadcasting).
Tensor sum_to_shape(const Tensor& t, const Shape& target);

Var elementwise(BinaryOp op, const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double factor);

Var operator+(const Var& a, const Var& b);
Var operator-(const Var& a, const Var& b);
Var operator*(const Var& a, const Var& b);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// x: [C,H,W] or [N,C,H,W]; kernels: [K,C,kh,kw].
Var conv2d(const Var& x, const Var& kernels, ConvParams params = {});
/// Adjoint of conv2d with the same kernels: [N,K,H',W'] -> [N,C,H,W] with
/// H = (H'-1)*stride - 2*padding + kh.
Var transpose_conv2d(const Var& y, const Var& kernels, ConvParams params = {});

Var relu(const Var& x);
Var exp(const Var& x);
Var log(const Var& x);
Var square(const Var& x);
Var clamp_min(const Var& x, double floor);
Var reshape(const Var& x, Shape shape);

/// Sum of all elements (rank-0 result).
Var reduce_sum(const Var& x);
Var mean(const Var& x);
/// Sum over axis 0.
Var sum_batch(const Var& x);
/// Mean squared difference over all elements.
Var mse(const Var& a, const Var& b);
/// Mean cross-entropy of row-wise softmax(logits) against class labels.
Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels);

}  // namespace layerlens
