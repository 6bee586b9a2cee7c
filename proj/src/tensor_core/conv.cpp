#include <string>

#include "layerlens/autodiff.h"
#include "layerlens/error.h"

namespace layerlens {

namespace {

struct ConvGeometry {
  std::size_t n, c, h, w;     // input (the larger side of the conv)
  std::size_t k, kh, kw;      // kernels
  std::size_t oh, ow;         // output of the forward conv
  std::size_t stride, pad;

  // Valid output-column range [lo, hi) for kernel column j.
  std::pair<std::size_t, std::size_t> cols(std::size_t j) const { return range(j, w, ow); }
  std::pair<std::size_t, std::size_t> rows(std::size_t i) const { return range(i, h, oh); }

 private:
  std::pair<std::size_t, std::size_t> range(std::size_t tap, std::size_t in, std::size_t out) const {
    // input = o*stride + tap - pad must lie in [0, in)
    std::size_t lo = 0;
    if (pad > tap) lo = (pad - tap + stride - 1) / stride;
    const long long top = static_cast<long long>(in) - 1 + static_cast<long long>(pad) - static_cast<long long>(tap);
    if (top < 0) return {0, 0};
    std::size_t hi = static_cast<std::size_t>(top) / stride + 1;
    if (hi > out) hi = out;
    if (lo > hi) lo = hi;
    return {lo, hi};
  }
};

std::size_t output_extent(std::size_t in, std::size_t kernel, ConvParams p, const char* axis) {
  if (p.stride == 0) throw ShapeError("conv stride must be positive");
  const std::size_t padded = in + 2 * p.padding;
  if (kernel > padded) {
    throw ShapeError(std::string("conv kernel larger than padded input along ") + axis);
  }
  if ((padded - kernel) % p.stride != 0) {
    throw ShapeError(std::string("conv output size is not an integer along ") + axis + " (" + std::to_string(in) +
                     "+2*" + std::to_string(p.padding) + "-" + std::to_string(kernel) + " not divisible by stride " +
                     std::to_string(p.stride) + ")");
  }
  return (padded - kernel) / p.stride + 1;
}

// out[n,k,oh,ow] = sum w[k,c,i,j] * x[n,c,oh*s+i-p, ow*s+j-p]
void conv_forward(const ConvGeometry& g, const double* x, const double* w, double* out) {
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t k = 0; k < g.k; ++k) {
      double* o = out + (n * g.k + k) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.c; ++c) {
        const double* xin = x + (n * g.c + c) * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const auto [r0, r1] = g.rows(i);
          for (std::size_t j = 0; j < g.kw; ++j) {
            const double wt = w[((k * g.c + c) * g.kh + i) * g.kw + j];
            if (wt == 0.0) continue;
            const auto [c0, c1] = g.cols(j);
            for (std::size_t r = r0; r < r1; ++r) {
              const double* xrow = xin + (r * g.stride + i - g.pad) * g.w;
              double* orow = o + r * g.ow;
              if (g.stride == 1) {
                const std::size_t shift = j - g.pad;  // wraps, but q + shift is in range
                for (std::size_t q = c0; q < c1; ++q) orow[q] += wt * xrow[q + shift];
              } else {
                for (std::size_t q = c0; q < c1; ++q) orow[q] += wt * xrow[q * g.stride + j - g.pad];
              }
            }
          }
        }
      }
    }
}

// Adjoint of conv_forward in x: gx[n,c,...] += w * gy[n,k,...]
void conv_adjoint(const ConvGeometry& g, const double* gy, const double* w, double* gx) {
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t k = 0; k < g.k; ++k) {
      const double* go = gy + (n * g.k + k) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.c; ++c) {
        double* xin = gx + (n * g.c + c) * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const auto [r0, r1] = g.rows(i);
          for (std::size_t j = 0; j < g.kw; ++j) {
            const double wt = w[((k * g.c + c) * g.kh + i) * g.kw + j];
            if (wt == 0.0) continue;
            const auto [c0, c1] = g.cols(j);
            for (std::size_t r = r0; r < r1; ++r) {
              double* xrow = xin + (r * g.stride + i - g.pad) * g.w;
              const double* orow = go + r * g.ow;
              for (std::size_t q = c0; q < c1; ++q) xrow[q * g.stride + j - g.pad] += wt * orow[q];
            }
          }
        }
      }
    }
}

// gw[k,c,i,j] = sum gy[n,k,oh,ow] * x[n,c,oh*s+i-p, ow*s+j-p]
void conv_kernel_grad(const ConvGeometry& g, const double* x, const double* gy, double* gw) {
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t k = 0; k < g.k; ++k) {
      const double* go = gy + (n * g.k + k) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.c; ++c) {
        const double* xin = x + (n * g.c + c) * g.h * g.w;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const auto [r0, r1] = g.rows(i);
          for (std::size_t j = 0; j < g.kw; ++j) {
            const auto [c0, c1] = g.cols(j);
            double acc = 0.0;
            for (std::size_t r = r0; r < r1; ++r) {
              const double* xrow = xin + (r * g.stride + i - g.pad) * g.w;
              const double* orow = go + r * g.ow;
              for (std::size_t q = c0; q < c1; ++q) acc += orow[q] * xrow[q * g.stride + j - g.pad];
            }
            gw[((k * g.c + c) * g.kh + i) * g.kw + j] += acc;
          }
        }
      }
    }
}

Shape with_batch(const Shape& s, bool batched, std::size_t n) {
  Shape out = s;
  if (batched) out.insert(out.begin(), n);
  return out;
}

}  // namespace

Var conv2d(const Var& x, const Var& kernels, ConvParams params) {
  const Shape& xs = x.shape();
  const Shape& ks = kernels.shape();
  if ((xs.size() != 3 && xs.size() != 4) || ks.size() != 4) {
    throw ShapeError("conv2d expects [N,]C,H,W input and K,C,kh,kw kernels, got " + to_string(xs) + " and " +
                     to_string(ks));
  }
  const bool has_batch = xs.size() == 4;
  const std::size_t off = has_batch ? 1 : 0;
  ConvGeometry g{};
  g.n = has_batch ? xs[0] : 1;
  g.c = xs[off];
  g.h = xs[off + 1];
  g.w = xs[off + 2];
  g.k = ks[0];
  g.kh = ks[2];
  g.kw = ks[3];
  if (ks[1] != g.c) throw ShapeError("conv2d channel mismatch: input " + to_string(xs) + ", kernels " + to_string(ks));
  g.oh = output_extent(g.h, g.kh, params, "height");
  g.ow = output_extent(g.w, g.kw, params, "width");
  g.stride = params.stride;
  g.pad = params.padding;

  Tensor out(with_batch(Shape{g.k, g.oh, g.ow}, has_batch, g.n));
  conv_forward(g, x.value().data().data(), kernels.value().data().data(), out.data().data());
  return make_op(std::move(out), {x, kernels},
                 [g, x, kernels](const Tensor& gy, const std::vector<bool>& wanted) {
                   std::vector<Tensor> grads(2);
                   if (wanted[0]) {
                     grads[0] = Tensor(x.shape());
                     conv_adjoint(g, gy.data().data(), kernels.value().data().data(), grads[0].data().data());
                   }
                   if (wanted[1]) {
                     grads[1] = Tensor(kernels.shape());
                     conv_kernel_grad(g, x.value().data().data(), gy.data().data(), grads[1].data().data());
                   }
                   return grads;
                 },
                 "conv2d");
}

Var transpose_conv2d(const Var& y, const Var& kernels, ConvParams params) {
  const Shape& ys = y.shape();
  const Shape& ks = kernels.shape();
  if ((ys.size() != 3 && ys.size() != 4) || ks.size() != 4) {
    throw ShapeError("transpose_conv2d expects [N,]K,H,W input and K,C,kh,kw kernels, got " + to_string(ys) +
                     " and " + to_string(ks));
  }
  if (params.stride == 0) throw ShapeError("conv stride must be positive");
  const bool has_batch = ys.size() == 4;
  const std::size_t off = has_batch ? 1 : 0;
  ConvGeometry g{};
  g.n = has_batch ? ys[0] : 1;
  g.k = ks[0];
  g.c = ks[1];
  g.kh = ks[2];
  g.kw = ks[3];
  if (ys[off] != g.k) {
    throw ShapeError("transpose_conv2d channel mismatch: input " + to_string(ys) + ", kernels " + to_string(ks));
  }
  g.oh = ys[off + 1];
  g.ow = ys[off + 2];
  const long long h = static_cast<long long>((g.oh - 1) * params.stride + g.kh) - 2 * static_cast<long long>(params.padding);
  const long long w = static_cast<long long>((g.ow - 1) * params.stride + g.kw) - 2 * static_cast<long long>(params.padding);
  if (h <= 0 || w <= 0) throw ShapeError("transpose_conv2d output would be empty");
  g.h = static_cast<std::size_t>(h);
  g.w = static_cast<std::size_t>(w);
  g.stride = params.stride;
  g.pad = params.padding;

  Tensor out(with_batch(Shape{g.c, g.h, g.w}, has_batch, g.n));
  conv_adjoint(g, y.value().data().data(), kernels.value().data().data(), out.data().data());
  return make_op(std::move(out), {y, kernels},
                 [g, y, kernels](const Tensor& gx, const std::vector<bool>& wanted) {
                   std::vector<Tensor> grads(2);
                   if (wanted[0]) {
                     grads[0] = Tensor(y.shape());
                     conv_forward(g, gx.data().data(), kernels.value().data().data(), grads[0].data().data());
                   }
                   if (wanted[1]) {
                     grads[1] = Tensor(kernels.shape());
                     conv_kernel_grad(g, gx.data().data(), y.value().data().data(), grads[1].data().data());
                   }
                   return grads;
                 },
                 "transpose_conv2d");
}

}  // namespace layerlens
