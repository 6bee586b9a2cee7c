#include <algorithm>
#include <cmath>
#include <string>

#include "layerlens/autodiff.h"
#include "layerlens/error.h"

namespace layerlens {

namespace {

/// Strides of `in` aligned to the trailing dims of `out`; 0 on broadcast axes.
std::vector<std::size_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  const std::size_t lead = out.size() - in.size();
  for (std::size_t k = in.size(); k-- > 0;) {
    strides[lead + k] = in[k] == 1 ? 0 : stride;
    stride *= in[k];
  }
  return strides;
}

/// Calls f(out_index, a_offset, b_offset) over every element of `out`.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& a, const Shape& b, F&& f) {
  const std::size_t rank = out.size();
  if (rank == 0) {
    f(std::size_t{0}, std::size_t{0}, std::size_t{0});
    return;
  }
  const auto sa = aligned_strides(a, out);
  const auto sb = aligned_strides(b, out);
  const std::size_t inner = out[rank - 1];
  const std::size_t outer = numel(out) / inner;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t oa = 0, ob = 0, o = 0;
  for (std::size_t block = 0; block < outer; ++block) {
    std::size_t ia = oa, ib = ob;
    for (std::size_t j = 0; j < inner; ++j, ++o, ia += sa[rank - 1], ib += sb[rank - 1]) f(o, ia, ib);
    for (std::size_t k = rank - 1; k-- > 0;) {
      ++idx[k];
      oa += sa[k];
      ob += sb[k];
      if (idx[k] < out[k]) break;
      oa -= sa[k] * out[k];
      ob -= sb[k] * out[k];
      idx[k] = 0;
    }
  }
}

Tensor broadcast_binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  Tensor out(broadcast_shape(a.shape(), b.shape()));
  auto dst = out.data();
  auto x = a.data();
  auto y = b.data();
  auto run = [&](auto fn) {
    if (a.shape() == b.shape()) {
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = fn(x[i], y[i]);
    } else {
      for_each_broadcast(out.shape(), a.shape(), b.shape(),
                         [&](std::size_t o, std::size_t ia, std::size_t ib) { dst[o] = fn(x[ia], y[ib]); });
    }
  };
  switch (op) {
    case BinaryOp::add: run([](double p, double q) { return p + q; }); break;
    case BinaryOp::sub: run([](double p, double q) { return p - q; }); break;
    case BinaryOp::mul: run([](double p, double q) { return p * q; }); break;
    case BinaryOp::div: run([](double p, double q) { return p / q; }); break;
  }
  return out;
}

template <class F>
Tensor map(const Tensor& t, F f) {
  Tensor out(t.shape());
  auto src = t.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = f(src[i]);
  return out;
}

Tensor product(const Tensor& a, const Tensor& b) { return broadcast_binary(BinaryOp::mul, a, b); }

const char* op_name(BinaryOp op) {
  switch (op) {
    case BinaryOp::add: return "add";
    case BinaryOp::sub: return "sub";
    case BinaryOp::mul: return "mul";
    case BinaryOp::div: return "div";
  }
  return "binary";
}

}  // namespace

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t da = k < rank - a.size() ? 1 : a[k - (rank - a.size())];
    const std::size_t db = k < rank - b.size() ? 1 : b[k - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("shapes " + to_string(a) + " and " + to_string(b) + " do not broadcast");
    }
    out[k] = std::max(da, db);
  }
  return out;
}

Tensor sum_to_shape(const Tensor& t, const Shape& target) {
  if (t.shape() == target) return t;
  if (broadcast_shape(target, t.shape()) != t.shape()) {
    throw ShapeError("cannot reduce " + to_string(t.shape()) + " to " + to_string(target));
  }
  Tensor out(target);
  auto dst = out.data();
  auto src = t.data();
  for_each_broadcast(t.shape(), t.shape(), target,
                     [&](std::size_t o, std::size_t, std::size_t it) { dst[it] += src[o]; });
  return out;
}

Var elementwise(BinaryOp op, const Var& a, const Var& b) {
  Tensor value = broadcast_binary(op, a.value(), b.value());
  GradientRule rule = [op, a, b](const Tensor& g, const std::vector<bool>& wanted) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    std::vector<Tensor> out(2);
    switch (op) {
      case BinaryOp::add:
        if (wanted[0]) out[0] = sum_to_shape(g, av.shape());
        if (wanted[1]) out[1] = sum_to_shape(g, bv.shape());
        break;
      case BinaryOp::sub:
        if (wanted[0]) out[0] = sum_to_shape(g, av.shape());
        if (wanted[1]) out[1] = sum_to_shape(map(g, [](double v) { return -v; }), bv.shape());
        break;
      case BinaryOp::mul:
        if (wanted[0]) out[0] = sum_to_shape(product(g, bv), av.shape());
        if (wanted[1]) out[1] = sum_to_shape(product(g, av), bv.shape());
        break;
      case BinaryOp::div: {
        const Tensor inv = map(bv, [](double v) { return 1.0 / v; });
        if (wanted[0]) out[0] = sum_to_shape(product(g, inv), av.shape());
        if (wanted[1]) {
          // d(a/b)/db = -a / b^2
          const Tensor q = broadcast_binary(BinaryOp::mul, av, map(inv, [](double v) { return -v * v; }));
          out[1] = sum_to_shape(product(g, q), bv.shape());
        }
        break;
      }
    }
    return out;
  };
  return make_op(std::move(value), {a, b}, std::move(rule), op_name(op));
}

Var add(const Var& a, const Var& b) { return elementwise(BinaryOp::add, a, b); }
Var sub(const Var& a, const Var& b) { return elementwise(BinaryOp::sub, a, b); }
Var mul(const Var& a, const Var& b) { return elementwise(BinaryOp::mul, a, b); }
Var div(const Var& a, const Var& b) { return elementwise(BinaryOp::div, a, b); }
Var operator+(const Var& a, const Var& b) { return add(a, b); }
Var operator-(const Var& a, const Var& b) { return sub(a, b); }
Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var scale(const Var& a, double factor) {
  Tensor value = map(a.value(), [factor](double v) { return v * factor; });
  return make_op(std::move(value), {a},
                 [factor](const Tensor& g, const std::vector<bool>&) {
                   return std::vector<Tensor>{map(g, [factor](double v) { return v * factor; })};
                 },
                 "scale");
}

namespace {
Tensor matmul_values(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out(Shape{m, n});
  auto A = a.data();
  auto B = b.data();
  auto C = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = C.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose_values(const Tensor& a) {
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out(Shape{n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}
}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul dimension mismatch: " + to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  return make_op(matmul_values(a.value(), b.value()), {a, b},
                 [a, b](const Tensor& g, const std::vector<bool>& wanted) {
                   std::vector<Tensor> out(2);
                   if (wanted[0]) out[0] = matmul_values(g, transpose_values(b.value()));
                   if (wanted[1]) out[1] = matmul_values(transpose_values(a.value()), g);
                   return out;
                 },
                 "matmul");
}

Var transpose(const Var& a) {
  if (a.shape().size() != 2) throw ShapeError("transpose expects a matrix, got " + to_string(a.shape()));
  return make_op(transpose_values(a.value()), {a},
                 [](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{transpose_values(g)}; },
                 "transpose");
}

Var relu(const Var& x) {
  return make_op(map(x.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {x},
                 [x](const Tensor& g, const std::vector<bool>&) {
                   const Tensor& xv = x.value();
                   Tensor out(g.shape());
                   for (std::size_t i = 0; i < g.size(); ++i) out[i] = xv[i] > 0.0 ? g[i] : 0.0;
                   return std::vector<Tensor>{std::move(out)};
                 },
                 "relu");
}

Var exp(const Var& x) {
  Tensor value = map(x.value(), [](double v) { return std::exp(v); });
  Tensor ev = x.requires_grad() ? value : Tensor();
  return make_op(std::move(value), {x},
                 [ev](const Tensor& g, const std::vector<bool>&) { return std::vector<Tensor>{product(g, ev)}; },
                 "exp");
}

Var log(const Var& x) {
  return make_op(map(x.value(), [](double v) { return std::log(v); }), {x},
                 [x](const Tensor& g, const std::vector<bool>&) {
                   const Tensor& xv = x.value();
                   Tensor out(g.shape());
                   for (std::size_t i = 0; i < g.size(); ++i) out[i] = g[i] / xv[i];
                   return std::vector<Tensor>{std::move(out)};
                 },
                 "log");
}

Var square(const Var& x) {
  return make_op(map(x.value(), [](double v) { return v * v; }), {x},
                 [x](const Tensor& g, const std::vector<bool>&) {
                   const Tensor& xv = x.value();
                   Tensor out(g.shape());
                   for (std::size_t i = 0; i < g.size(); ++i) out[i] = 2.0 * xv[i] * g[i];
                   return std::vector<Tensor>{std::move(out)};
                 },
                 "square");
}

Var clamp_min(const Var& x, double floor) {
  return make_op(map(x.value(), [floor](double v) { return std::max(v, floor); }), {x},
                 [x, floor](const Tensor& g, const std::vector<bool>&) {
                   const Tensor& xv = x.value();
                   Tensor out(g.shape());
                   for (std::size_t i = 0; i < g.size(); ++i) out[i] = xv[i] > floor ? g[i] : 0.0;
                   return std::vector<Tensor>{std::move(out)};
                 },
                 "clamp_min");
}

Var reshape(const Var& x, Shape shape) {
  const Shape original = x.shape();
  Tensor value = x.value().reshaped(std::move(shape));
  return make_op(std::move(value), {x},
                 [original](const Tensor& g, const std::vector<bool>&) {
                   return std::vector<Tensor>{g.reshaped(original)};
                 },
                 "reshape");
}

Var reduce_sum(const Var& x) {
  const Shape original = x.shape();
  return make_op(Tensor::scalar(sum(x.value())), {x},
                 [original](const Tensor& g, const std::vector<bool>&) {
                   return std::vector<Tensor>{Tensor(original, g.item())};
                 },
                 "reduce_sum");
}

Var mean(const Var& x) { return scale(reduce_sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var sum_batch(const Var& x) {
  if (x.shape().empty()) throw ShapeError("sum_batch on a scalar");
  const Shape original = x.shape();
  Shape rest(original.begin() + 1, original.end());
  const std::size_t n = original[0];
  const std::size_t inner = numel(rest);
  Tensor out(rest);
  auto src = x.value().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < inner; ++i) out[i] += src[b * inner + i];
  return make_op(std::move(out), {x},
                 [original, n, inner](const Tensor& g, const std::vector<bool>&) {
                   Tensor grad(original);
                   for (std::size_t b = 0; b < n; ++b)
                     for (std::size_t i = 0; i < inner; ++i) grad[b * inner + i] = g[i];
                   return std::vector<Tensor>{std::move(grad)};
                 },
                 "sum_batch");
}

Var mse(const Var& a, const Var& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mse shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  return mean(square(sub(a, b)));
}

Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  if (logits.shape().size() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeError("softmax_cross_entropy expects [N,K] logits with N labels");
  }
  const std::size_t n = logits.shape()[0], k = logits.shape()[1];
  Tensor probs(logits.shape());
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= k) throw ShapeError("label " + std::to_string(labels[i]) + " out of range");
    const double* row = logits.value().data().data() + i * k;
    const double peak = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - peak);
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(row[j] - peak) / z;
    loss -= (row[labels[i]] - peak) - std::log(z);
  }
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return make_op(Tensor::scalar(loss / static_cast<double>(n)), {logits},
                 [probs = std::move(probs), y = std::move(y), n, k](const Tensor& g, const std::vector<bool>&) {
                   Tensor grad = probs;
                   const double s = g.item() / static_cast<double>(n);
                   for (std::size_t i = 0; i < n; ++i) grad[i * k + y[i]] -= 1.0;
                   for (auto& v : grad.data()) v *= s;
                   return std::vector<Tensor>{std::move(grad)};
                 },
                 "softmax_cross_entropy");
}

}  // namespace layerlens
