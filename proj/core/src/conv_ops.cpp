// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "shufflenas/cost.hpp"
#include "shufflenas/ops.hpp"
#include "shufflenas/tape.hpp"

namespace shufflenas::ops {

using detail::grad_of;
using detail::should_record;

namespace {

void require_nchw(const Tensor& x, const char* op) {
  if (x.rank() != 4)
    throw std::invalid_argument(std::string(op) + ": expected N x C x H x W, got " +
                                shape_str(x.shape()));
}

void require_stride(int stride, const char* op) {
  if (stride != 1 && stride != 2)
    throw std::invalid_argument(std::string(op) + ": stride must be 1 or 2, got " +
                                std::to_string(stride));
}

// Leading padding for TF-style same padding.
std::int64_t pad_before(std::int64_t extent, std::int64_t kernel, int stride) {
  const std::int64_t out = same_out(extent, stride);
  const std::int64_t total = std::max<std::int64_t>((out - 1) * stride + kernel - extent, 0);
  return total / 2;
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, ho, wo, pt, pl;
  int stride;
  std::int64_t k() const { return cin * kh * kw; }
  std::int64_t hwo() const { return ho * wo; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1; }
};

template <class T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.kh; ++ky)
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        T* dst = col + ((c * g.kh + ky) * g.kw + kx) * g.hwo();
        const T* src = x + c * g.h * g.w;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pt + ky;
          T* row = dst + oy * g.wo;
          if (iy < 0 || iy >= g.h) {
            std::fill(row, row + g.wo, T(0));
            continue;
          }
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pl + kx;
            row[ox] = (ix >= 0 && ix < g.w) ? src[iy * g.w + ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  for (std::int64_t c = 0; c < g.cin; ++c)
    for (std::int64_t ky = 0; ky < g.kh; ++ky)
      for (std::int64_t kx = 0; kx < g.kw; ++kx) {
        const T* src = col + ((c * g.kh + ky) * g.kw + kx) * g.hwo();
        T* dst = dx + c * g.h * g.w;
        for (std::int64_t oy = 0; oy < g.ho; ++oy) {
          const std::int64_t iy = oy * g.stride - g.pt + ky;
          if (iy < 0 || iy >= g.h) continue;
          for (std::int64_t ox = 0; ox < g.wo; ++ox) {
            const std::int64_t ix = ox * g.stride - g.pl + kx;
            if (ix >= 0 && ix < g.w) dst[iy * g.w + ix] += src[oy * g.wo + ox];
          }
        }
      }
}

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::int64_t m, std::int64_t k, std::int64_t n, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = C + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      const T* brow = B + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[k x n] += A[m x k]^T * B[m x n]
template <class T>
void gemm_tn(std::int64_t m, std::int64_t k, std::int64_t n, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* brow = B + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = A[i * k + p];
      T* crow = C + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m x k] += A[m x n] * B[k x n]^T
template <class T>
void gemm_nt(std::int64_t m, std::int64_t k, std::int64_t n, const T* A, const T* B, T* C) {
  for (std::int64_t i = 0; i < m; ++i) {
    const T* arow = A + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T* brow = B + p * n;
      T acc = 0;
      for (std::int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      C[i * k + p] += acc;
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weights, int stride) {
  require_nchw(x, "conv2d");
  require_nchw(weights, "conv2d weights");
  require_stride(stride, "conv2d");
  if (weights.dim(1) != x.dim(1))
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.dim(1)) +
                                " channels, weights expect " + std::to_string(weights.dim(1)) +
                                " " + shape_str(weights.shape()));
  if (x.dtype() != weights.dtype()) throw std::invalid_argument("conv2d: dtype mismatch");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weights.dim(0);
  g.kh = weights.dim(2);
  g.kw = weights.dim(3);
  g.stride = stride;
  g.ho = same_out(g.h, stride);
  g.wo = same_out(g.w, stride);
  g.pt = pad_before(g.h, g.kh, stride);
  g.pl = pad_before(g.w, g.kw, stride);

  Tensor out = Tensor::zeros({g.n, g.cout, g.ho, g.wo}, x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto W = weights.data<T>();
    auto Y = out.data<T>();
    std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.k() * g.hwo()));
    for (std::int64_t b = 0; b < g.n; ++b) {
      const T* xb = X.data() + b * g.cin * g.h * g.w;
      const T* src = xb;
      if (!g.pointwise()) {
        im2col(g, xb, col.data());
        src = col.data();
      }
      gemm_nn(g.cout, g.k(), g.hwo(), W.data(), src, Y.data() + b * g.cout * g.hwo());
    }
  });
  cost::kernel(g.n * g.cout * g.k() * g.hwo(), x.numel(), weights.numel(), out.numel());

  if (should_record({&x, &weights})) {
    auto xi = x.impl_ptr(), wi = weights.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("conv2d", {xi, wi}, oi, [xi, wi, oi, g] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto X = xi->value.as<T>();
        auto W = wi->value.as<T>();
        auto G = oi->grad->as<T>();
        std::vector<T> col(g.pointwise() ? 0 : static_cast<std::size_t>(g.k() * g.hwo()));
        std::vector<T> dcol(static_cast<std::size_t>(g.k() * g.hwo()));
        T* GW = wi->requires_grad ? grad_of(*wi).as<T>().data() : nullptr;
        T* GX = xi->requires_grad ? grad_of(*xi).as<T>().data() : nullptr;
        for (std::int64_t b = 0; b < g.n; ++b) {
          const T* xb = X.data() + b * g.cin * g.h * g.w;
          const T* gb = G.data() + b * g.cout * g.hwo();
          if (GW) {
            const T* src = xb;
            if (!g.pointwise()) {
              im2col(g, xb, col.data());
              src = col.data();
            }
            gemm_nt(g.cout, g.k(), g.hwo(), gb, src, GW);
          }
          if (GX) {
            T* dxb = GX + b * g.cin * g.h * g.w;
            if (g.pointwise()) {
              gemm_tn(g.cout, g.k(), g.hwo(), W.data(), gb, dxb);
            } else {
              std::fill(dcol.begin(), dcol.end(), T(0));
              gemm_tn(g.cout, g.k(), g.hwo(), W.data(), gb, dcol.data());
              col2im(g, dcol.data(), dxb);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& x, const Tensor& weights, int stride) {
  require_nchw(x, "depthwise_conv2d");
  require_nchw(weights, "depthwise_conv2d weights");
  require_stride(stride, "depthwise_conv2d");
  if (weights.dim(0) != x.dim(1) || weights.dim(1) != 1)
    throw std::invalid_argument("depthwise_conv2d: weights " + shape_str(weights.shape()) +
                                " do not match input " + shape_str(x.shape()));
  if (x.dtype() != weights.dtype())
    throw std::invalid_argument("depthwise_conv2d: dtype mismatch");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t kh = weights.dim(2), kw = weights.dim(3);
  const std::int64_t ho = same_out(h, stride), wo = same_out(w, stride);
  const std::int64_t pt = pad_before(h, kh, stride), pl = pad_before(w, kw, stride);
  const std::int64_t s = stride;

  // Valid output column range [lo, hi) for kernel column kx.
  auto ox_range = [=](std::int64_t kx) {
    std::int64_t lo = 0;
    while (lo < wo && lo * s - pl + kx < 0) ++lo;
    std::int64_t hi = wo;
    while (hi > lo && (hi - 1) * s - pl + kx >= w) --hi;
    return std::pair{lo, hi};
  };

  Tensor out = Tensor::zeros({n, c, ho, wo}, x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto W = weights.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* src = X.data() + (b * c + ch) * h * w;
        T* dst = Y.data() + (b * c + ch) * ho * wo;
        const T* wk = W.data() + ch * kh * kw;
        for (std::int64_t ky = 0; ky < kh; ++ky)
          for (std::int64_t kx = 0; kx < kw; ++kx) {
            const T wv = wk[ky * kw + kx];
            const auto [lo, hi] = ox_range(kx);
            for (std::int64_t oy = 0; oy < ho; ++oy) {
              const std::int64_t iy = oy * s - pt + ky;
              if (iy < 0 || iy >= h) continue;
              const std::int64_t base = iy * w - pl + kx;
              T* drow = dst + oy * wo;
              for (std::int64_t ox = lo; ox < hi; ++ox) drow[ox] += wv * src[base + ox * s];
            }
          }
      }
  });
  cost::kernel(n * c * kh * kw * ho * wo, x.numel(), weights.numel(), out.numel());

  if (should_record({&x, &weights})) {
    auto xi = x.impl_ptr(), wi = weights.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("depthwise_conv2d", {xi, wi}, oi,
                          [=] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto X = xi->value.as<T>();
        auto W = wi->value.as<T>();
        auto G = oi->grad->as<T>();
        T* GW = wi->requires_grad ? grad_of(*wi).as<T>().data() : nullptr;
        T* GX = xi->requires_grad ? grad_of(*xi).as<T>().data() : nullptr;
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* src = X.data() + (b * c + ch) * h * w;
            const T* gout = G.data() + (b * c + ch) * ho * wo;
            const T* wk = W.data() + ch * kh * kw;
            for (std::int64_t ky = 0; ky < kh; ++ky)
              for (std::int64_t kx = 0; kx < kw; ++kx) {
                const auto [lo, hi] = ox_range(kx);
                T wacc = 0;
                const T wv = wk[ky * kw + kx];
                for (std::int64_t oy = 0; oy < ho; ++oy) {
                  const std::int64_t iy = oy * s - pt + ky;
                  if (iy < 0 || iy >= h) continue;
                  const std::int64_t base = iy * w - pl + kx;
                  const T* grow = gout + oy * wo;
                  if (GW)
                    for (std::int64_t ox = lo; ox < hi; ++ox) wacc += grow[ox] * src[base + ox * s];
                  if (GX) {
                    T* dxp = GX + (b * c + ch) * h * w;
                    for (std::int64_t ox = lo; ox < hi; ++ox) dxp[base + ox * s] += wv * grow[ox];
                  }
                }
                if (GW) GW[ch * kh * kw + ky * kw + kx] += wacc;
              }
          }
      });
    });
  }
  return out;
}

Tensor pool2d(const Tensor& x, PoolKind kind, int kernel, int stride) {
  require_nchw(x, "pool2d");
  require_stride(stride, "pool2d");
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::int64_t ho = same_out(h, stride), wo = same_out(w, stride);
  const std::int64_t pt = pad_before(h, kernel, stride), pl = pad_before(w, kernel, stride);
  Tensor out = Tensor::zeros({n, c, ho, wo}, x.dtype());
  // For max/min: flat input index selected per output; for avg: window count.
  auto selected = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(out.numel()));

  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t plane = 0; plane < n * c; ++plane) {
      const T* src = X.data() + plane * h * w;
      for (std::int64_t oy = 0; oy < ho; ++oy)
        for (std::int64_t ox = 0; ox < wo; ++ox) {
          const std::int64_t o = (plane * ho + oy) * wo + ox;
          T best = kind == PoolKind::max ? -std::numeric_limits<T>::infinity()
                                         : std::numeric_limits<T>::infinity();
          std::int64_t arg = -1;
          T acc = 0;
          std::int64_t count = 0;
          for (std::int64_t ky = 0; ky < kernel; ++ky) {
            const std::int64_t iy = oy * stride - pt + ky;
            if (iy < 0 || iy >= h) continue;
            for (std::int64_t kx = 0; kx < kernel; ++kx) {
              const std::int64_t ix = ox * stride - pl + kx;
              if (ix < 0 || ix >= w) continue;
              const T v = src[iy * w + ix];
              if (kind == PoolKind::avg) {
                acc += v;
                ++count;
              } else if ((kind == PoolKind::max && v > best) ||
                         (kind == PoolKind::min && v < best) || arg < 0) {
                best = v;
                arg = plane * h * w + iy * w + ix;
              }
            }
          }
          if (kind == PoolKind::avg) {
            Y[o] = acc / static_cast<T>(count);
            (*selected)[o] = count;
          } else {
            Y[o] = best;
            (*selected)[o] = arg;
          }
        }
    }
  });
  cost::kernel(0, x.numel(), 0, out.numel());

  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("pool2d", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        if (kind != PoolKind::avg) {
          for (std::size_t o = 0; o < G.size(); ++o) GX[(*selected)[o]] += G[o];
          return;
        }
        for (std::int64_t plane = 0; plane < n * c; ++plane)
          for (std::int64_t oy = 0; oy < ho; ++oy)
            for (std::int64_t ox = 0; ox < wo; ++ox) {
              const std::int64_t o = (plane * ho + oy) * wo + ox;
              const T share = G[o] / static_cast<T>((*selected)[o]);
              for (std::int64_t ky = 0; ky < kernel; ++ky) {
                const std::int64_t iy = oy * stride - pt + ky;
                if (iy < 0 || iy >= h) continue;
                for (std::int64_t kx = 0; kx < kernel; ++kx) {
                  const std::int64_t ix = ox * stride - pl + kx;
                  if (ix < 0 || ix >= w) continue;
                  GX[plane * h * w + iy * w + ix] += share;
                }
              }
            }
      });
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  BatchNormBuffers& buffers, bool training, double momentum, double epsilon) {
  require_nchw(x, "batch_norm");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  for (const Tensor* t : std::initializer_list<const Tensor*>{&gain, &bias, &buffers.running_mean, &buffers.running_var})
    if (t->numel() != c || t->dtype() != x.dtype())
      throw std::invalid_argument("batch_norm: per-channel tensor " + shape_str(t->shape()) +
                                  " does not match input " + shape_str(x.shape()));
  const std::int64_t m = n * hw;
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  auto mean = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));
  auto invstd = std::make_shared<std::vector<double>>(static_cast<std::size_t>(c));

  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    auto gm = gain.data<T>();
    auto bs = bias.data<T>();
    auto rm = buffers.running_mean.data<T>();
    auto rv = buffers.running_var.data<T>();
    for (std::int64_t ch = 0; ch < c; ++ch) {
      double mu, var;
      if (training) {
        double acc = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* p = X.data() + (b * c + ch) * hw;
          for (std::int64_t i = 0; i < hw; ++i) acc += p[i];
        }
        mu = acc / static_cast<double>(m);
        double sq = 0;
        for (std::int64_t b = 0; b < n; ++b) {
          const T* p = X.data() + (b * c + ch) * hw;
          for (std::int64_t i = 0; i < hw; ++i) {
            const double d = p[i] - mu;
            sq += d * d;
          }
        }
        var = sq / static_cast<double>(m);
        const double unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
        rm[ch] = static_cast<T>(momentum * rm[ch] + (1.0 - momentum) * mu);
        rv[ch] = static_cast<T>(momentum * rv[ch] + (1.0 - momentum) * unbiased);
      } else {
        mu = rm[ch];
        var = rv[ch];
      }
      const double is = 1.0 / std::sqrt(var + epsilon);
      (*mean)[ch] = mu;
      (*invstd)[ch] = is;
      const T a = static_cast<T>(gm[ch] * is);
      const T o = static_cast<T>(bs[ch] - gm[ch] * is * mu);
      for (std::int64_t b = 0; b < n; ++b) {
        const T* p = X.data() + (b * c + ch) * hw;
        T* q = Y.data() + (b * c + ch) * hw;
        for (std::int64_t i = 0; i < hw; ++i) q[i] = a * p[i] + o;
      }
    }
  });
  cost::elementwise(x.numel() + 2 * c, x.numel());

  if (should_record({&x, &gain, &bias})) {
    auto xi = x.impl_ptr(), gi = gain.impl_ptr(), bi = bias.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("batch_norm", {xi, gi, bi}, oi, [=] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto X = xi->value.as<T>();
        auto G = oi->grad->as<T>();
        auto gm = gi->value.as<T>();
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const double mu = (*mean)[ch], is = (*invstd)[ch];
          double sum_g = 0, sum_gx = 0;
          for (std::int64_t b = 0; b < n; ++b) {
            const T* p = X.data() + (b * c + ch) * hw;
            const T* g = G.data() + (b * c + ch) * hw;
            for (std::int64_t i = 0; i < hw; ++i) {
              sum_g += g[i];
              sum_gx += g[i] * (p[i] - mu) * is;
            }
          }
          if (gi->requires_grad) grad_of(*gi).as<T>()[ch] += static_cast<T>(sum_gx);
          if (bi->requires_grad) grad_of(*bi).as<T>()[ch] += static_cast<T>(sum_g);
          if (!xi->requires_grad) continue;
          auto GX = grad_of(*xi).as<T>();
          const double scale = gm[ch] * is;
          for (std::int64_t b = 0; b < n; ++b) {
            const T* p = X.data() + (b * c + ch) * hw;
            const T* g = G.data() + (b * c + ch) * hw;
            T* dx = GX.data() + (b * c + ch) * hw;
            if (training) {
              const double inv_m = 1.0 / static_cast<double>(m);
              for (std::int64_t i = 0; i < hw; ++i) {
                const double xhat = (p[i] - mu) * is;
                dx[i] += static_cast<T>(scale * (g[i] - inv_m * sum_g - xhat * inv_m * sum_gx));
              }
            } else {
              for (std::int64_t i = 0; i < hw; ++i) dx[i] += static_cast<T>(scale * g[i]);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Tensor& first = parts[0];
  require_nchw(first, "concat_channels");
  std::int64_t total = 0;
  for (const auto& p : parts) {
    require_nchw(p, "concat_channels");
    if (p.dim(0) != first.dim(0) || p.dim(2) != first.dim(2) || p.dim(3) != first.dim(3) ||
        p.dtype() != first.dtype())
      throw std::invalid_argument("concat_channels: incompatible parts " +
                                  shape_str(first.shape()) + " and " + shape_str(p.shape()));
    total += p.dim(1);
  }
  const std::int64_t n = first.dim(0), hw = first.dim(2) * first.dim(3);
  Tensor out = Tensor::zeros({n, total, first.dim(2), first.dim(3)}, first.dtype());
  visit_dtype(first.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto Y = out.data<T>();
    for (std::int64_t b = 0; b < n; ++b) {
      std::int64_t offset = 0;
      for (const auto& p : parts) {
        auto X = p.data<T>();
        const std::int64_t len = p.dim(1) * hw;
        std::copy_n(X.data() + b * len, len, Y.data() + (b * total) * hw + offset);
        offset += len;
      }
    }
  });
  cost::kernel(0, out.numel(), 0, out.numel());
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  if (should_record(inputs)) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    std::vector<std::int64_t> channels;
    for (const auto& p : inputs) {
      impls.push_back(p.impl_ptr());
      channels.push_back(p.dim(1));
    }
    auto oi = out.impl_ptr();
    active_tape()->record("concat_channels", impls, oi, [=] {
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        std::int64_t offset = 0;
        for (std::size_t k = 0; k < impls.size(); ++k) {
          const std::int64_t len = channels[k] * hw;
          if (impls[k]->requires_grad) {
            auto GX = grad_of(*impls[k]).as<T>();
            for (std::int64_t b = 0; b < n; ++b) {
              const T* src = G.data() + b * total * hw + offset;
              T* dst = GX.data() + b * len;
              for (std::int64_t i = 0; i < len; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
      });
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::int64_t start, std::int64_t count) {
  require_nchw(x, "slice_channels");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (start < 0 || count <= 0 || start + count > c)
    throw std::invalid_argument("slice_channels: range [" + std::to_string(start) + ", " +
                                std::to_string(start + count) + ") outside " +
                                shape_str(x.shape()));
  Tensor out = Tensor::zeros({n, count, x.dim(2), x.dim(3)}, x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t b = 0; b < n; ++b)
      std::copy_n(X.data() + (b * c + start) * hw, count * hw, Y.data() + b * count * hw);
  });
  cost::kernel(0, out.numel(), 0, out.numel());
  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("slice_channels", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        for (std::int64_t b = 0; b < n; ++b) {
          const T* src = G.data() + b * count * hw;
          T* dst = GX.data() + (b * c + start) * hw;
          for (std::int64_t i = 0; i < count * hw; ++i) dst[i] += src[i];
        }
      });
    });
  }
  return out;
}

std::vector<std::int64_t> shuffle_permutation(std::int64_t channels, std::int64_t groups) {
  if (groups <= 0 || channels <= 0 || channels % groups != 0)
    throw std::invalid_argument("channel_shuffle: " + std::to_string(channels) +
                                " channels not divisible into " + std::to_string(groups) +
                                " groups");
  const std::int64_t per_group = channels / groups;
  std::vector<std::int64_t> perm(static_cast<std::size_t>(channels));
  for (std::int64_t a = 0; a < per_group; ++a)
    for (std::int64_t g = 0; g < groups; ++g) perm[a * groups + g] = g * per_group + a;
  return perm;
}

Tensor channel_shuffle(const Tensor& x, std::int64_t groups) {
  require_nchw(x, "channel_shuffle");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto perm = shuffle_permutation(c, groups);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t b = 0; b < n; ++b)
      for (std::int64_t ch = 0; ch < c; ++ch)
        std::copy_n(X.data() + (b * c + perm[ch]) * hw, hw, Y.data() + (b * c + ch) * hw);
  });
  cost::kernel(0, x.numel(), 0, out.numel());
  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("channel_shuffle", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        for (std::int64_t b = 0; b < n; ++b)
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const T* src = G.data() + (b * c + ch) * hw;
            T* dst = GX.data() + (b * c + perm[ch]) * hw;
            for (std::int64_t i = 0; i < hw; ++i) dst[i] += src[i];
          }
      });
    });
  }
  return out;
}

Tensor shift_one_pixel(const Tensor& x) {
  require_nchw(x, "shift_one_pixel");
  const std::int64_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t p = 0; p < planes; ++p)
      for (std::int64_t i = 0; i + 1 < h; ++i)
        for (std::int64_t j = 0; j + 1 < w; ++j)
          Y[(p * h + i) * w + j] = X[(p * h + i + 1) * w + j + 1];
  });
  cost::kernel(0, x.numel(), 0, out.numel());
  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("shift_one_pixel", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        for (std::int64_t p = 0; p < planes; ++p)
          for (std::int64_t i = 0; i + 1 < h; ++i)
            for (std::int64_t j = 0; j + 1 < w; ++j)
              GX[(p * h + i + 1) * w + j + 1] += G[(p * h + i) * w + j];
      });
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_nchw(x, "global_avg_pool");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  Tensor out = Tensor::zeros({n, c}, x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t p = 0; p < n * c; ++p) {
      T acc = 0;
      for (std::int64_t i = 0; i < hw; ++i) acc += X[p * hw + i];
      Y[p] = acc / static_cast<T>(hw);
    }
  });
  cost::kernel(0, x.numel(), 0, out.numel());
  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("global_avg_pool", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        for (std::int64_t p = 0; p < n * c; ++p) {
          const T share = G[p] / static_cast<T>(hw);
          for (std::int64_t i = 0; i < hw; ++i) GX[p * hw + i] += share;
        }
      });
    });
  }
  return out;
}

Tensor scale_per_sample(const Tensor& x, std::span<const double> factors) {
  if (x.rank() < 1 || static_cast<std::int64_t>(factors.size()) != x.dim(0))
    throw std::invalid_argument("scale_per_sample: " + std::to_string(factors.size()) +
                                " factors for " + shape_str(x.shape()));
  const std::int64_t n = x.dim(0), per = x.numel() / n;
  auto f = std::make_shared<std::vector<double>>(factors.begin(), factors.end());
  Tensor out = Tensor::zeros(x.shape(), x.dtype());
  visit_dtype(x.dtype(), [&](auto zero) {
    using T = decltype(zero);
    auto X = x.data<T>();
    auto Y = out.data<T>();
    for (std::int64_t b = 0; b < n; ++b) {
      const T s = static_cast<T>((*f)[b]);
      for (std::int64_t i = 0; i < per; ++i) Y[b * per + i] = s * X[b * per + i];
    }
  });
  cost::elementwise(x.numel(), x.numel());
  if (should_record({&x})) {
    auto xi = x.impl_ptr(), oi = out.impl_ptr();
    active_tape()->record("scale_per_sample", {xi}, oi, [=] {
      if (!xi->requires_grad) return;
      visit_dtype(oi->value.dtype(), [&](auto zero) {
        using T = decltype(zero);
        auto G = oi->grad->as<T>();
        auto GX = grad_of(*xi).as<T>();
        for (std::int64_t b = 0; b < n; ++b) {
          const T s = static_cast<T>((*f)[b]);
          for (std::int64_t i = 0; i < per; ++i) GX[b * per + i] += s * G[b * per + i];
        }
      });
    });
  }
  return out;
}

}  // namespace shufflenas::ops
