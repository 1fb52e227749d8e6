// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <memory>
#include <numeric>
#include <string>

#include "dmkd/errors.hpp"

namespace dmkd {

namespace {

using GradBuffers = std::span<std::vector<double>* const>;

// Row-major strides of `shape`.
std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

// For each axis of `full`, the stride into `b` (0 on broadcast axes).
std::vector<std::size_t> broadcast_strides(const Shape& full, const Shape& b) {
  if (b.size() > full.size()) {
    throw ShapeMismatch("cannot broadcast " + shape_str(b) + " to " + shape_str(full));
  }
  const std::size_t lead = full.size() - b.size();
  auto bs = strides_of(b);
  std::vector<std::size_t> out(full.size(), 0);
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (b[i] == full[lead + i]) {
      out[lead + i] = bs[i];
    } else if (b[i] != 1) {
      throw ShapeMismatch("cannot broadcast " + shape_str(b) + " to " + shape_str(full));
    }
  }
  return out;
}

// Offsets into `b` for every flat index of `full`.
std::vector<std::size_t> broadcast_index(const Shape& full, const std::vector<std::size_t>& bstr) {
  const std::size_t n = shape_numel(full);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> counter(full.size(), 0);
  std::size_t off = 0;
  for (std::size_t i = 0; i < n; ++i) {
    idx[i] = off;
    for (std::size_t ax = full.size(); ax-- > 0;) {
      if (++counter[ax] < full[ax]) {
        off += bstr[ax];
        break;
      }
      off -= bstr[ax] * (full[ax] - 1);
      counter[ax] = 0;
    }
  }
  return idx;
}

// c[M x N] += a[M x K] . b[K x N]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict crow = c + i * n;
    const double* arow = a + i * k;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      const double a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
      const double* __restrict b0 = b + p * n;
      const double* __restrict b1 = b0 + n;
      const double* __restrict b2 = b1 + n;
      const double* __restrict b3 = b2 + n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
      }
    }
    for (; p < k; ++p) {
      const double av = arow[p];
      const double* __restrict brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[M x N] += a^T . b where a is [K x M], b is [K x N]. With `overwrite`,
// c is assigned instead of accumulated into.
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool overwrite = false) {
  if (overwrite && k == 0) std::fill_n(c, m * n, 0.0);
  bool first = overwrite;
  std::size_t p = 0;
  for (; p + 4 <= k; p += 4, first = false) {
    const double* __restrict b0 = b + p * n;
    const double* __restrict b1 = b0 + n;
    const double* __restrict b2 = b1 + n;
    const double* __restrict b3 = b2 + n;
    for (std::size_t i = 0; i < m; ++i) {
      const double a0 = a[p * m + i], a1 = a[(p + 1) * m + i];
      const double a2 = a[(p + 2) * m + i], a3 = a[(p + 3) * m + i];
      double* __restrict crow = c + i * n;
      if (first) {
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] = a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
        }
      }
    }
  }
  for (; p < k; ++p, first = false) {
    const double* __restrict brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = a[p * m + i];
      double* __restrict crow = c + i * n;
      if (first) {
        for (std::size_t j = 0; j < n; ++j) crow[j] = av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

// Dot product with four independent partial sums.
double dot(const double* __restrict x, const double* __restrict y, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t p = 0;
  for (; p + 4 <= n; p += 4) {
    acc[0] += x[p] * y[p];
    acc[1] += x[p + 1] * y[p + 1];
    acc[2] += x[p + 2] * y[p + 2];
    acc[3] += x[p + 3] * y[p + 3];
  }
  double tail = 0.0;
  for (; p < n; ++p) tail += x[p] * y[p];
  return (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail;
}

// c[M x N] += a . b^T where a is [M x K], b is [N x K]
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] += dot(a + i * k, b + j * k, k);
  }
}

// Unfolds one [C, H, W] image into [C*k*k, H*W] columns with zero padding.
void im2col(const double* x, double* col, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k) {
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    const double* plane = x + c * height * width;
    for (long ky = 0; ky < static_cast<long>(k); ++ky) {
      for (long kx = 0; kx < static_cast<long>(k); ++kx, ++row) {
        double* out = col + row * height * width;
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - pad;
          for (long xx = 0; xx < w; ++xx) {
            const long sx = xx + kx - pad;
            out[y * w + xx] = (sy >= 0 && sy < h && sx >= 0 && sx < w) ? plane[sy * w + sx] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters columns back into a [C, H, W] gradient.
void col2im(const double* col, double* x, std::size_t channels, std::size_t height,
            std::size_t width, std::size_t k) {
  const long pad = static_cast<long>(k / 2);
  const long h = static_cast<long>(height);
  const long w = static_cast<long>(width);
  std::size_t row = 0;
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = x + c * height * width;
    for (long ky = 0; ky < static_cast<long>(k); ++ky) {
      for (long kx = 0; kx < static_cast<long>(k); ++kx, ++row) {
        const double* in = col + row * height * width;
        for (long y = 0; y < h; ++y) {
          const long sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          for (long xx = 0; xx < w; ++xx) {
            const long sx = xx + kx - pad;
            if (sx >= 0 && sx < w) plane[sy * w + sx] += in[y * w + xx];
          }
        }
      }
    }
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  const Shape& shape = a.shape();
  const std::size_t n = a.numel();
  const auto& av = a.vec();
  const auto& bv = b.vec();
  std::vector<double> out(n);
  const char* name = op == BinaryOp::kAdd ? "add" : op == BinaryOp::kSub ? "sub" : "mul";

  if (b.shape() == shape) {
    for (std::size_t i = 0; i < n; ++i) {
      switch (op) {
        case BinaryOp::kAdd: out[i] = av[i] + bv[i]; break;
        case BinaryOp::kSub: out[i] = av[i] - bv[i]; break;
        case BinaryOp::kMul: out[i] = av[i] * bv[i]; break;
      }
    }
    return make_result(name, shape, std::move(out), {a, b},
                       [op, a, b](std::span<const double> g, GradBuffers pg) {
                         const auto& av = a.vec();
                         const auto& bv = b.vec();
                         if (auto* ga = pg[0]) {
                           for (std::size_t i = 0; i < g.size(); ++i)
                             (*ga)[i] += op == BinaryOp::kMul ? g[i] * bv[i] : g[i];
                         }
                         if (auto* gb = pg[1]) {
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             (*gb)[i] += op == BinaryOp::kMul   ? g[i] * av[i]
                                         : op == BinaryOp::kSub ? -g[i]
                                                                : g[i];
                           }
                         }
                       });
  }

  auto bidx = std::make_shared<std::vector<std::size_t>>(
      broadcast_index(shape, broadcast_strides(shape, b.shape())));
  for (std::size_t i = 0; i < n; ++i) {
    const double y = bv[(*bidx)[i]];
    switch (op) {
      case BinaryOp::kAdd: out[i] = av[i] + y; break;
      case BinaryOp::kSub: out[i] = av[i] - y; break;
      case BinaryOp::kMul: out[i] = av[i] * y; break;
    }
  }
  return make_result(name, shape, std::move(out), {a, b},
                     [op, a, b, bidx](std::span<const double> g, GradBuffers pg) {
                       const auto& av = a.vec();
                       const auto& bv = b.vec();
                       const auto& idx = *bidx;
                       if (auto* ga = pg[0]) {
                         for (std::size_t i = 0; i < g.size(); ++i)
                           (*ga)[i] += op == BinaryOp::kMul ? g[i] * bv[idx[i]] : g[i];
                       }
                       if (auto* gb = pg[1]) {
                         for (std::size_t i = 0; i < g.size(); ++i) {
                           (*gb)[idx[i]] += op == BinaryOp::kMul   ? g[i] * av[i]
                                            : op == BinaryOp::kSub ? -g[i]
                                                                   : g[i];
                         }
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::kMul, a, b); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.vec());
  for (auto& v : out) v *= factor;
  return make_result("scale", a.shape(), std::move(out), {a},
                     [factor](std::span<const double> g, GradBuffers pg) {
                       auto& ga = *pg[0];
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
                     });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.dim() != 2 || b.dim() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeMismatch("matmul " + shape_str(a.shape()) + " . " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  gemm_nn(a.vec().data(), b.vec().data(), out.data(), m, k, n);
  return make_result("matmul", {m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double> g, GradBuffers pg) {
                       if (auto* ga = pg[0]) {
                         // dA = dC . B^T
                         gemm_nt(g.data(), b.vec().data(), ga->data(), m, n, k);
                       }
                       if (auto* gb = pg[1]) {
                         // dB = A^T . dC
                         gemm_tn(a.vec().data(), g.data(), gb->data(), k, m, n);
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.dim() != 3 && x.dim() != 4) {
    throw ShapeMismatch("conv2d input must be [C,H,W] or [N,C,H,W], got " + shape_str(x.shape()));
  }
  if (w.dim() != 4 || w.shape()[2] != w.shape()[3] || w.shape()[2] % 2 == 0) {
    throw ShapeMismatch("conv2d weight must be [C_out,C_in,k,k] with odd k, got " +
                        shape_str(w.shape()));
  }
  const bool batched = x.dim() == 4;
  const std::size_t batch = batched ? x.shape()[0] : 1;
  const std::size_t cin = x.shape()[batched ? 1 : 0];
  const std::size_t height = x.shape()[batched ? 2 : 1];
  const std::size_t width = x.shape()[batched ? 3 : 2];
  const std::size_t cout = w.shape()[0];
  const std::size_t k = w.shape()[2];
  if (w.shape()[1] != cin) {
    throw ShapeMismatch("conv2d weight expects " + std::to_string(w.shape()[1]) +
                        " input channels, input has " + std::to_string(cin));
  }
  if (b.defined() && (b.dim() != 1 || b.shape()[0] != cout)) {
    throw ShapeMismatch("conv2d bias must be [" + std::to_string(cout) + "], got " +
                        shape_str(b.shape()));
  }
  const std::size_t hw = height * width;
  const std::size_t kk = cin * k * k;
  const bool pointwise = (k == 1);

  Shape out_shape = batched ? Shape{batch, cout, height, width} : Shape{cout, height, width};
  std::vector<double> out(batch * cout * hw, 0.0);
  // Unfolded columns for every sample, kept for the weight gradient.
  std::shared_ptr<double[]> cols(pointwise ? nullptr : new double[batch * kk * hw]);
  for (std::size_t s = 0; s < batch; ++s) {
    const double* xs = x.vec().data() + s * cin * hw;
    double* os = out.data() + s * cout * hw;
    if (b.defined()) {
      for (std::size_t o = 0; o < cout; ++o) std::fill_n(os + o * hw, hw, b.vec()[o]);
    }
    const double* cs = xs;
    if (!pointwise) {
      im2col(xs, cols.get() + s * kk * hw, cin, height, width, k);
      cs = cols.get() + s * kk * hw;
    }
    gemm_nn(w.vec().data(), cs, os, cout, kk, hw);
  }

  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  return make_result(
      "conv2d", std::move(out_shape), std::move(out), std::move(parents),
      [x, w, cols, batch, cin, height, width, cout, k, hw, kk, pointwise](
          std::span<const double> g, GradBuffers pg) {
        auto* gx = pg[0];
        auto* gw = pg[1];
        auto* gb = pg.size() > 2 ? pg[2] : nullptr;
        std::vector<double> dcol(gx && !pointwise ? kk * hw : 0);
        for (std::size_t s = 0; s < batch; ++s) {
          const double* gs = g.data() + s * cout * hw;
          if (gb) {
            for (std::size_t o = 0; o < cout; ++o) {
              double acc = 0.0;
              for (std::size_t p = 0; p < hw; ++p) acc += gs[o * hw + p];
              (*gb)[o] += acc;
            }
          }
          if (gw) {
            const double* cs =
                pointwise ? x.vec().data() + s * cin * hw : cols.get() + s * kk * hw;
            gemm_nt(gs, cs, gw->data(), cout, hw, kk);
          }
          if (gx) {
            double* gxs = gx->data() + s * cin * hw;
            if (pointwise) {
              gemm_tn(w.vec().data(), gs, gxs, kk, cout, hw);
            } else {
              gemm_tn(w.vec().data(), gs, dcol.data(), kk, cout, hw, /*overwrite=*/true);
              col2im(dcol.data(), gxs, cin, height, width, k);
            }
          }
        }
      });
}

Tensor activation(Activation op, const Tensor& x) {
  const auto& xv = x.vec();
  std::vector<double> out(xv.size());
  switch (op) {
    case Activation::kSigmoid:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
      return make_result("sigmoid", x.shape(), out, {x},
                         [y = out](std::span<const double> g, GradBuffers pg) {
                           auto& gx = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i)
                             gx[i] += g[i] * y[i] * (1.0 - y[i]);
                         });
    case Activation::kRelu:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
      return make_result("relu", x.shape(), std::move(out), {x},
                         [x](std::span<const double> g, GradBuffers pg) {
                           auto& gx = *pg[0];
                           const auto& xv = x.vec();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (xv[i] > 0.0) gx[i] += g[i];
                         });
    case Activation::kGelu:
      for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * normal_cdf(xv[i]);
      return make_result("gelu", x.shape(), std::move(out), {x},
                         [x](std::span<const double> g, GradBuffers pg) {
                           auto& gx = *pg[0];
                           const auto& xv = x.vec();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double v = xv[i];
                             gx[i] += g[i] * (normal_cdf(v) + v * normal_pdf(v));
                           }
                         });
  }
  throw Error("unknown activation");
}

Tensor sigmoid(const Tensor& x) { return activation(Activation::kSigmoid, x); }
Tensor relu(const Tensor& x) { return activation(Activation::kRelu, x); }
Tensor gelu(const Tensor& x) { return activation(Activation::kGelu, x); }

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.dim() == 0) throw ShapeMismatch("layer_norm on a rank-0 tensor");
  const std::size_t c = x.shape().back();
  if (gain.numel() != c || bias.numel() != c) {
    throw ShapeMismatch("layer_norm gain/bias must have " + std::to_string(c) + " entries");
  }
  const std::size_t rows = x.numel() / c;
  const auto& xv = x.vec();
  const auto& gv = gain.vec();
  const auto& bv = bias.vec();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * c;
    double mu = 0.0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(c);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < c; ++j) {
      const double h = (row[j] - mu) * inv_std[r];
      xhat[r * c + j] = h;
      out[r * c + j] = h * gv[j] + bv[j];
    }
  }
  return make_result(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [gain, c, rows, xhat = std::move(xhat), inv_std = std::move(inv_std)](
          std::span<const double> g, GradBuffers pg) {
        const auto& gv = gain.vec();
        if (auto* gg = pg[1]) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) (*gg)[j] += g[r * c + j] * xhat[r * c + j];
        }
        if (auto* gb = pg[2]) {
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[r * c + j];
        }
        if (auto* gx = pg[0]) {
          const double inv_c = 1.0 / static_cast<double>(c);
          for (std::size_t r = 0; r < rows; ++r) {
            double mean_d = 0.0;
            double mean_dh = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gv[j];
              mean_d += d;
              mean_dh += d * xhat[r * c + j];
            }
            mean_d *= inv_c;
            mean_dh *= inv_c;
            for (std::size_t j = 0; j < c; ++j) {
              const double d = g[r * c + j] * gv[j];
              (*gx)[r * c + j] += inv_std[r] * (d - mean_d - xhat[r * c + j] * mean_dh);
            }
          }
        }
      });
}

Tensor reduce(Reduction op, const Tensor& x, std::vector<std::size_t> axes) {
  const Shape& in_shape = x.shape();
  Shape out_shape = in_shape;
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  for (auto ax : axes) {
    if (ax >= in_shape.size()) {
      throw BadAxis("reduce axis " + std::to_string(ax) + " out of range for " +
                    shape_str(in_shape));
    }
    out_shape[ax] = 1;
  }
  const std::size_t count = x.numel() / shape_numel(out_shape);
  auto out_idx = std::make_shared<std::vector<std::size_t>>(
      broadcast_index(in_shape, broadcast_strides(in_shape, out_shape)));
  std::vector<double> out(shape_numel(out_shape), 0.0);
  const auto& xv = x.vec();
  for (std::size_t i = 0; i < xv.size(); ++i) out[(*out_idx)[i]] += xv[i];
  const double factor = op == Reduction::kMean ? 1.0 / static_cast<double>(count) : 1.0;
  if (op == Reduction::kMean) {
    for (auto& v : out) v *= factor;
  }
  return make_result(op == Reduction::kMean ? "mean" : "sum", std::move(out_shape),
                     std::move(out), {x},
                     [out_idx, factor](std::span<const double> g, GradBuffers pg) {
                       auto& gx = *pg[0];
                       const auto& idx = *out_idx;
                       for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor * g[idx[i]];
                     });
}

Tensor sum(const Tensor& x, std::vector<std::size_t> axes) {
  return reduce(Reduction::kSum, x, std::move(axes));
}

Tensor mean(const Tensor& x, std::vector<std::size_t> axes) {
  return reduce(Reduction::kMean, x, std::move(axes));
}

Tensor sum_all(const Tensor& x) {
  std::vector<std::size_t> axes(x.dim());
  std::iota(axes.begin(), axes.end(), 0);
  return sum(x, std::move(axes));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeMismatch("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  return make_result("reshape", std::move(shape), x.vec(), {x},
                     [](std::span<const double> g, GradBuffers pg) {
                       auto& gx = *pg[0];
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                     });
}

Tensor permute(const Tensor& x, std::vector<std::size_t> order) {
  const Shape& in_shape = x.shape();
  if (order.size() != in_shape.size()) throw BadAxis("permute order rank mismatch");
  std::vector<bool> seen(order.size(), false);
  for (auto ax : order) {
    if (ax >= order.size() || seen[ax]) throw BadAxis("permute order is not a permutation");
    seen[ax] = true;
  }
  Shape out_shape(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) out_shape[i] = in_shape[order[i]];
  // Input offset for each output position.
  auto in_strides = strides_of(in_shape);
  std::vector<std::size_t> permuted(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) permuted[i] = in_strides[order[i]];
  auto src = std::make_shared<std::vector<std::size_t>>(broadcast_index(out_shape, permuted));
  std::vector<double> out(x.numel());
  const auto& xv = x.vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*src)[i]];
  return make_result("permute", std::move(out_shape), std::move(out), {x},
                     [src](std::span<const double> g, GradBuffers pg) {
                       auto& gx = *pg[0];
                       const auto& idx = *src;
                       for (std::size_t i = 0; i < g.size(); ++i) gx[idx[i]] += g[i];
                     });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.dim() != 2 || logits.shape()[0] != labels.size()) {
    throw ShapeMismatch("cross_entropy expects [N,K] logits with N labels, got " +
                        shape_str(logits.shape()) + " and " + std::to_string(labels.size()));
  }
  const std::size_t n = logits.shape()[0];
  const std::size_t k = logits.shape()[1];
  const auto& lv = logits.vec();
  std::vector<double> probs(n * k);
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = lv.data() + r * k;
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) {
      throw ShapeMismatch("label " + std::to_string(labels[r]) + " out of range");
    }
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    for (std::size_t j = 0; j < k; ++j) probs[r * k + j] = std::exp(row[j] - log_z);
    loss += log_z - row[labels[r]];
  }
  loss /= static_cast<double>(n);
  std::vector<int> lab(labels.begin(), labels.end());
  return make_result("cross_entropy", {1}, {loss}, {logits},
                     [probs = std::move(probs), lab = std::move(lab), n, k](
                         std::span<const double> g, GradBuffers pg) {
                       auto& gl = *pg[0];
                       const double s = g[0] / static_cast<double>(n);
                       for (std::size_t r = 0; r < n; ++r) {
                         for (std::size_t j = 0; j < k; ++j) {
                           const double onehot = static_cast<int>(j) == lab[r] ? 1.0 : 0.0;
                           gl[r * k + j] += s * (probs[r * k + j] - onehot);
                         }
                       }
                     });
}

Tensor sum_squared_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeMismatch("sum_squared_error " + shape_str(a.shape()) + " vs " +
                        shape_str(b.shape()));
  }
  Tensor d = sub(a, b);
  return reshape(sum_all(mul(d, d)), {1});
}

}  // namespace dmkd
