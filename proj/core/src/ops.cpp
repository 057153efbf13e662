#include "segforge/ops.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

#include "gemm.hpp"
#include "segforge/error.hpp"
#include "segforge/parallel.hpp"

SEGFORGE_NAMESPACE_BEGIN

namespace {

void require_rank4(const Tensor& t, const char* op, const char* what) {
  if (t.rank() != 4) {
    throw ContractError(std::string(op) + ": " + what + " must be rank 4 [N,C,H,W], got " + t.shape().str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!(a.shape() == b.shape())) {
    throw ContractError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, ho, wo;
  int stride, dilation, padding;

  std::size_t unfolded_rows() const { return cin * k * k; }
  std::size_t positions() const { return ho * wo; }
  bool is_pointwise() const { return k == 1 && stride == 1 && padding == 0; }
};

// col[(c*k + ki)*k + kj][oh*wo + ow] = x[c][oh*s - p + ki*d][ow*s - p + kj*d]
void im2col(const ConvGeometry& g, const Real* x, Real* col) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    const Real* plane = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        Real* row = col + ((c * g.k + ki) * g.k + kj) * positions;
        const long row_off = static_cast<long>(ki) * g.dilation - g.padding;
        const long col_off = static_cast<long>(kj) * g.dilation - g.padding;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + row_off;
          Real* out = row + oh * g.wo;
          if (ih < 0 || ih >= static_cast<long>(g.h)) {
            std::fill(out, out + g.wo, Real{0});
            continue;
          }
          const Real* src = plane + static_cast<std::size_t>(ih) * g.w;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + col_off;
            out[ow] = (iw >= 0 && iw < static_cast<long>(g.w)) ? src[iw] : Real{0};
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters col back into x (accumulating).
void col2im(const ConvGeometry& g, const Real* col, Real* x) {
  const std::size_t positions = g.positions();
  for (std::size_t c = 0; c < g.cin; ++c) {
    Real* plane = x + c * g.h * g.w;
    for (std::size_t ki = 0; ki < g.k; ++ki) {
      for (std::size_t kj = 0; kj < g.k; ++kj) {
        const Real* row = col + ((c * g.k + ki) * g.k + kj) * positions;
        const long row_off = static_cast<long>(ki) * g.dilation - g.padding;
        const long col_off = static_cast<long>(kj) * g.dilation - g.padding;
        for (std::size_t oh = 0; oh < g.ho; ++oh) {
          const long ih = static_cast<long>(oh) * g.stride + row_off;
          if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
          Real* dst = plane + static_cast<std::size_t>(ih) * g.w;
          const Real* src = row + oh * g.wo;
          for (std::size_t ow = 0; ow < g.wo; ++ow) {
            const long iw = static_cast<long>(ow) * g.stride + col_off;
            if (iw >= 0 && iw < static_cast<long>(g.w)) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeometry& g, const Tensor& x, const Tensor& weight, const Tensor& bias,
                   std::span<const Real> grad_out) {
  const std::size_t kdim = g.unfolded_rows();
  const std::size_t positions = g.positions();
  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * positions;

  if (bias.defined() && bias.requires_grad()) {
    std::vector<Real> gb(g.cout, Real{0});
    for (std::size_t n = 0; n < g.n; ++n) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        const Real* src = grad_out.data() + n * out_plane + co * positions;
        Real acc = 0;
        for (std::size_t j = 0; j < positions; ++j) acc += src[j];
        gb[co] += acc;
      }
    }
    detail::accumulate_grad(bias, gb);
  }

  if (weight.requires_grad()) {
    std::vector<Real> gw(g.cout * kdim, Real{0});
    std::vector<Real> col(g.is_pointwise() ? 0 : kdim * positions);
    std::vector<Real> col_t(kdim * positions);
    for (std::size_t n = 0; n < g.n; ++n) {
      const Real* xn = x.data().data() + n * in_plane;
      const Real* unfolded = xn;
      if (!g.is_pointwise()) {
        im2col(g, xn, col.data());
        unfolded = col.data();
      }
      detail::transpose(kdim, positions, unfolded, col_t.data());
      // gw[cout, kdim] += dY[cout, P] * col^T[P, kdim]
      detail::gemm_acc(g.cout, positions, kdim, grad_out.data() + n * out_plane, col_t.data(), gw.data(), true);
    }
    detail::accumulate_grad(weight, gw);
  }

  if (x.requires_grad()) {
    std::vector<Real> gx(g.n * in_plane, Real{0});
    const Real* w = weight.data().data();
    parallel_for(g.n, [&](std::size_t begin, std::size_t end) {
      std::vector<Real> gcol(kdim * positions);
      for (std::size_t n = begin; n < end; ++n) {
        Real* dst = gx.data() + n * in_plane;
        if (g.is_pointwise()) {
          detail::gemm_tn_acc(g.cout, kdim, positions, w, grad_out.data() + n * out_plane, dst);
          continue;
        }
        std::fill(gcol.begin(), gcol.end(), Real{0});
        detail::gemm_tn_acc(g.cout, kdim, positions, w, grad_out.data() + n * out_plane, gcol.data());
        col2im(g, gcol.data(), dst);
      }
    });
    detail::accumulate_grad(x, gx);
  }
}

}  // namespace

std::size_t conv_output_size(std::size_t in, std::size_t kernel, int stride, int dilation, int padding) {
  const long span = static_cast<long>(dilation) * (static_cast<long>(kernel) - 1) + 1;
  const long padded = static_cast<long>(in) + 2L * padding;
  if (padded < span) return 0;
  return static_cast<std::size_t>((padded - span) / stride + 1);
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
  if (options.stride < 1) throw ConfigError("conv2d: stride must be >= 1, got " + std::to_string(options.stride));
  if (options.dilation < 1) {
    throw ConfigError("conv2d: dilation must be >= 1, got " + std::to_string(options.dilation));
  }
  if (options.padding < 0) {
    throw ConfigError("conv2d: padding must be >= 0, got " + std::to_string(options.padding));
  }
  require_rank4(x, "conv2d", "input");
  require_rank4(weight, "conv2d", "weight");
  if (weight.dim(2) != weight.dim(3)) throw ContractError("conv2d: kernel must be square, got " + weight.shape().str());
  if (weight.dim(1) != x.dim(1)) {
    throw ContractError("conv2d: input has " + std::to_string(x.dim(1)) + " channels but weight expects " +
                        std::to_string(weight.dim(1)));
  }
  if (bias.defined() && !(bias.shape() == Shape{weight.dim(0)})) {
    throw ContractError("conv2d: bias shape " + bias.shape().str() + " does not match " +
                        std::to_string(weight.dim(0)) + " output channels");
  }

  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.k = weight.dim(2);
  g.stride = options.stride;
  g.dilation = options.dilation;
  g.padding = options.padding;
  const std::size_t span = static_cast<std::size_t>(g.dilation) * (g.k - 1) + 1;
  if (g.h + 2 * static_cast<std::size_t>(g.padding) < span || g.w + 2 * static_cast<std::size_t>(g.padding) < span) {
    throw ContractError("conv2d: effective kernel extent " + std::to_string(span) + " exceeds padded input " +
                        x.shape().str() + " with padding " + std::to_string(g.padding));
  }
  g.ho = conv_output_size(g.h, g.k, g.stride, g.dilation, g.padding);
  g.wo = conv_output_size(g.w, g.k, g.stride, g.dilation, g.padding);

  Tensor out(Shape{g.n, g.cout, g.ho, g.wo});
  const std::size_t kdim = g.unfolded_rows();
  const std::size_t positions = g.positions();
  const std::size_t in_plane = g.cin * g.h * g.w;
  const std::size_t out_plane = g.cout * positions;
  const Real* xd = x.data().data();
  const Real* wd = weight.data().data();
  Real* od = out.data().data();

  auto run = [&](std::size_t begin, std::size_t end, bool inner_parallel) {
    std::vector<Real> col(g.is_pointwise() ? 0 : kdim * positions);
    for (std::size_t n = begin; n < end; ++n) {
      Real* on = od + n * out_plane;
      if (bias.defined()) {
        const Real* bd = bias.data().data();
        for (std::size_t co = 0; co < g.cout; ++co) std::fill(on + co * positions, on + (co + 1) * positions, bd[co]);
      }
      const Real* unfolded = xd + n * in_plane;
      if (!g.is_pointwise()) {
        im2col(g, unfolded, col.data());
        unfolded = col.data();
      }
      detail::gemm_acc(g.cout, kdim, positions, wd, unfolded, on, inner_parallel);
    }
  };
  if (g.n > 1) {
    parallel_for(g.n, [&](std::size_t b, std::size_t e) { run(b, e, false); });
  } else {
    run(0, g.n, true);
  }
  check_finite(out, "conv2d");

  if (detail::needs_grad({&x, &weight, &bias})) {
    detail::record("conv2d", {x, weight, bias}, out, [g, x, weight, bias](std::span<const Real> grad_out) {
      conv_backward(g, x, weight, bias, grad_out);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

BatchNormState BatchNormState::identity(std::size_t channels) {
  BatchNormState s;
  s.running_mean = Tensor::zeros(Shape{channels});
  s.running_var = Tensor::ones(Shape{channels});
  s.initialized = true;
  return s;
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state, Mode mode,
                   BatchNormOptions options) {
  require_rank4(x, "batchnorm2d", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const Shape channel_shape{c};
  if (!(gamma.shape() == channel_shape) || !(beta.shape() == channel_shape)) {
    throw ContractError("batchnorm2d: gamma/beta must have shape " + channel_shape.str());
  }
  const std::size_t plane = h * w;
  const std::size_t count = n * plane;
  const Real eps = options.epsilon;

  Tensor out(x.shape());
  std::vector<Real> xhat(x.numel());
  std::vector<Real> inv_std(c);
  const Real* xd = x.data().data();
  const Real* gd = gamma.data().data();
  const Real* bd = beta.data().data();
  Real* od = out.data().data();

  if (mode == Mode::kTrain) {
    if (count < 2) {
      throw ContractError("batchnorm2d: train mode needs N*H*W >= 2 per channel, got " + std::to_string(count));
    }
    if (!state.initialized) state = BatchNormState::identity(c);
    if (!(state.running_mean.shape() == channel_shape)) {
      throw ContractError("batchnorm2d: running statistics do not match " + std::to_string(c) + " channels");
    }
    std::vector<Real> batch_mean(c), batch_var(c);
    parallel_for(c, [&](std::size_t begin, std::size_t end) {
      for (std::size_t ch = begin; ch < end; ++ch) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const Real* p = xd + (b * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) s += p[i];
        }
        const double mean = s / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
          const Real* p = xd + (b * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const double d = p[i] - mean;
            ss += d * d;
          }
        }
        const double var = ss / static_cast<double>(count);
        const double istd = 1.0 / std::sqrt(var + eps);
        batch_mean[ch] = static_cast<Real>(mean);
        batch_var[ch] = static_cast<Real>(var * static_cast<double>(count) / static_cast<double>(count - 1));
        inv_std[ch] = static_cast<Real>(istd);
        for (std::size_t b = 0; b < n; ++b) {
          const std::size_t off = (b * c + ch) * plane;
          for (std::size_t i = 0; i < plane; ++i) {
            const Real xh = static_cast<Real>((xd[off + i] - mean) * istd);
            xhat[off + i] = xh;
            od[off + i] = gd[ch] * xh + bd[ch];
          }
        }
      }
    });
    auto rm = state.running_mean.data();
    auto rv = state.running_var.data();
    const Real m = options.momentum;
    for (std::size_t ch = 0; ch < c; ++ch) {
      rm[ch] = (Real{1} - m) * rm[ch] + m * batch_mean[ch];
      rv[ch] = (Real{1} - m) * rv[ch] + m * batch_var[ch];
    }
  } else {
    if (!state.initialized) {
      throw ContractError("batchnorm2d: uninitialized statistics (infer mode before any running-stat update)");
    }
    if (!(state.running_mean.shape() == channel_shape)) {
      throw ContractError("batchnorm2d: running statistics do not match " + std::to_string(c) + " channels");
    }
    const Real* rm = state.running_mean.data().data();
    const Real* rv = state.running_var.data().data();
    for (std::size_t ch = 0; ch < c; ++ch) inv_std[ch] = Real{1} / std::sqrt(rv[ch] + eps);
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const std::size_t off = (b * c + ch) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const Real xh = (xd[off + i] - rm[ch]) * inv_std[ch];
          xhat[off + i] = xh;
          od[off + i] = gd[ch] * xh + bd[ch];
        }
      }
    }
  }
  check_finite(out, "batchnorm2d");

  if (detail::needs_grad({&x, &gamma, &beta})) {
    detail::record("batchnorm2d", {x, gamma, beta}, out,
                   [x, gamma, beta, mode, n, c, plane, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](std::span<const Real> g) {
                     std::vector<Real> gg(c, Real{0}), gb(c, Real{0});
                     std::vector<Real> gx(x.requires_grad() ? x.numel() : 0);
                     const Real* gam = gamma.data().data();
                     const double count = static_cast<double>(n * plane);
                     for (std::size_t ch = 0; ch < c; ++ch) {
                       double sg = 0.0, sgx = 0.0;
                       for (std::size_t b = 0; b < n; ++b) {
                         const std::size_t off = (b * c + ch) * plane;
                         for (std::size_t i = 0; i < plane; ++i) {
                           sg += g[off + i];
                           sgx += static_cast<double>(g[off + i]) * xhat[off + i];
                         }
                       }
                       gg[ch] = static_cast<Real>(sgx);
                       gb[ch] = static_cast<Real>(sg);
                       if (gx.empty()) continue;
                       const double k = static_cast<double>(gam[ch]) * inv_std[ch];
                       const double mean_g = sg / count;
                       const double mean_gx = sgx / count;
                       for (std::size_t b = 0; b < n; ++b) {
                         const std::size_t off = (b * c + ch) * plane;
                         for (std::size_t i = 0; i < plane; ++i) {
                           gx[off + i] = mode == Mode::kTrain
                                             ? static_cast<Real>(k * (g[off + i] - mean_g - xhat[off + i] * mean_gx))
                                             : static_cast<Real>(k * g[off + i]);
                         }
                       }
                     }
                     detail::accumulate_grad(gamma, gg);
                     detail::accumulate_grad(beta, gb);
                     if (!gx.empty()) detail::accumulate_grad(x, gx);
                   });
  }
  return out;
}

// ---------------------------------------------------------------------------

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = xd[i] > Real{0} ? xd[i] : Real{0};
  check_finite(out, "relu");
  if (detail::needs_grad({&x})) {
    detail::record("relu", {x}, out, [x](std::span<const Real> g) {
      auto xd = x.data();
      std::vector<Real> gx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = xd[i] > Real{0} ? g[i] : Real{0};
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

namespace {

// Kept strictly inside (0, 1): far-out logits would otherwise round to exactly
// 0 or 1, which the probability contract excludes.
Real stable_sigmoid(Real v) {
  constexpr Real lo = std::numeric_limits<Real>::min();
  constexpr Real hi = Real{1} - std::numeric_limits<Real>::epsilon() / 2;
  if (std::isnan(v)) return v;
  if (v >= Real{0}) return std::min(hi, Real{1} / (Real{1} + std::exp(-v)));
  const Real e = std::exp(v);
  return std::max(lo, e / (Real{1} + e));
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = stable_sigmoid(xd[i]);
  check_finite(out, "sigmoid");
  if (detail::needs_grad({&x})) {
    detail::record("sigmoid", {x}, out, [x, out](std::span<const Real> g) {
      auto y = out.data();
      std::vector<Real> gx(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] * y[i] * (Real{1} - y[i]);
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
  check_finite(out, "add");
  if (detail::needs_grad({&a, &b})) {
    detail::record("add", {a, b}, out, [a, b](std::span<const Real> g) {
      detail::accumulate_grad(a, g);
      detail::accumulate_grad(b, g);
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * bd[i];
  check_finite(out, "mul");
  if (detail::needs_grad({&a, &b})) {
    detail::record("mul", {a, b}, out, [a, b](std::span<const Real> g) {
      auto ad = a.data();
      auto bd = b.data();
      std::vector<Real> tmp(g.size());
      if (a.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * bd[i];
        detail::accumulate_grad(a, tmp);
      }
      if (b.requires_grad()) {
        for (std::size_t i = 0; i < g.size(); ++i) tmp[i] = g[i] * ad[i];
        detail::accumulate_grad(b, tmp);
      }
    });
  }
  return out;
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
  require_rank4(x, "mul_channel", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (!(s.shape() == Shape{n, c, 1, 1})) {
    throw ContractError("mul_channel: scale must be " + Shape{n, c, 1, 1}.str() + ", got " + s.shape().str());
  }
  Tensor out(x.shape());
  auto xd = x.data();
  auto sd = s.data();
  auto od = out.data();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    for (std::size_t i = 0; i < plane; ++i) od[nc * plane + i] = xd[nc * plane + i] * sd[nc];
  }
  check_finite(out, "mul_channel");
  if (detail::needs_grad({&x, &s})) {
    detail::record("mul_channel", {x, s}, out, [x, s, n, c, plane](std::span<const Real> g) {
      auto xd = x.data();
      auto sd = s.data();
      if (x.requires_grad()) {
        std::vector<Real> gx(g.size());
        for (std::size_t nc = 0; nc < n * c; ++nc) {
          for (std::size_t i = 0; i < plane; ++i) gx[nc * plane + i] = g[nc * plane + i] * sd[nc];
        }
        detail::accumulate_grad(x, gx);
      }
      if (s.requires_grad()) {
        std::vector<Real> gs(n * c);
        for (std::size_t nc = 0; nc < n * c; ++nc) {
          Real acc = 0;
          for (std::size_t i = 0; i < plane; ++i) acc += g[nc * plane + i] * xd[nc * plane + i];
          gs[nc] = acc;
        }
        detail::accumulate_grad(s, gs);
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& x, Real factor) {
  Tensor out(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < od.size(); ++i) od[i] = xd[i] * factor;
  check_finite(out, "scale");
  if (detail::needs_grad({&x})) {
    detail::record("scale", {x}, out, [x, factor](std::span<const Real> g) {
      std::vector<Real> gx(g.begin(), g.end());
      for (auto& v : gx) v *= factor;
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_rank4(a, "concat_channels", "first input");
  require_rank4(b, "concat_channels", "second input");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ContractError("concat_channels: batch/spatial mismatch " + a.shape().str() + " vs " + b.shape().str());
  }
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(ad.begin() + i * ca * plane, ca * plane, od.begin() + i * (ca + cb) * plane);
    std::copy_n(bd.begin() + i * cb * plane, cb * plane, od.begin() + (i * (ca + cb) + ca) * plane);
  }
  if (detail::needs_grad({&a, &b})) {
    detail::record("concat_channels", {a, b}, out, [a, b, n, ca, cb, plane](std::span<const Real> g) {
      if (a.requires_grad()) {
        std::vector<Real> ga(n * ca * plane);
        for (std::size_t i = 0; i < n; ++i) {
          std::copy_n(g.begin() + i * (ca + cb) * plane, ca * plane, ga.begin() + i * ca * plane);
        }
        detail::accumulate_grad(a, ga);
      }
      if (b.requires_grad()) {
        std::vector<Real> gb(n * cb * plane);
        for (std::size_t i = 0; i < n; ++i) {
          std::copy_n(g.begin() + (i * (ca + cb) + ca) * plane, cb * plane, gb.begin() + i * cb * plane);
        }
        detail::accumulate_grad(b, gb);
      }
    });
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t end) {
  require_rank4(x, "slice_channels", "input");
  if (begin >= end || end > x.dim(1)) {
    throw ContractError("slice_channels: bad range [" + std::to_string(begin) + "," + std::to_string(end) +
                        ") for " + x.shape().str());
  }
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3), width = end - begin;
  Tensor out(Shape{n, width, x.dim(2), x.dim(3)});
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(xd.begin() + (i * c + begin) * plane, width * plane, od.begin() + i * width * plane);
  }
  if (detail::needs_grad({&x})) {
    detail::record("slice_channels", {x}, out, [x, n, c, plane, begin, width](std::span<const Real> g) {
      std::vector<Real> gx(x.numel(), Real{0});
      for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(g.begin() + i * width * plane, width * plane, gx.begin() + (i * c + begin) * plane);
      }
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor global_avg_pool(const Tensor& x) {
  require_rank4(x, "global_avg_pool", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  if (plane == 0) throw ContractError("global_avg_pool: empty spatial extent");
  Tensor out(Shape{n, c, 1, 1});
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t nc = 0; nc < n * c; ++nc) {
    double acc = 0.0;
    for (std::size_t i = 0; i < plane; ++i) acc += xd[nc * plane + i];
    od[nc] = static_cast<Real>(acc / static_cast<double>(plane));
  }
  check_finite(out, "global_avg_pool");
  if (detail::needs_grad({&x})) {
    detail::record("global_avg_pool", {x}, out, [x, n, c, plane](std::span<const Real> g) {
      std::vector<Real> gx(x.numel());
      const Real inv = Real{1} / static_cast<Real>(plane);
      for (std::size_t nc = 0; nc < n * c; ++nc) {
        std::fill_n(gx.begin() + nc * plane, plane, g[nc] * inv);
      }
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x, int factor) {
  if (factor < 1) throw ConfigError("upsample_nearest: factor must be >= 1, got " + std::to_string(factor));
  require_rank4(x, "upsample_nearest", "input");
  const std::size_t f = static_cast<std::size_t>(factor);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out(Shape{x.dim(0), x.dim(1), h * f, w * f});
  auto xd = x.data();
  auto od = out.data();
  const std::size_t oh = h * f, ow = w * f;
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      const Real* src = xd.data() + (p * h + i / f) * w;
      Real* dst = od.data() + (p * oh + i) * ow;
      for (std::size_t j = 0; j < ow; ++j) dst[j] = src[j / f];
    }
  }
  if (detail::needs_grad({&x})) {
    detail::record("upsample_nearest", {x}, out, [x, nc, h, w, f](std::span<const Real> g) {
      std::vector<Real> gx(x.numel(), Real{0});
      const std::size_t oh = h * f, ow = w * f;
      for (std::size_t p = 0; p < nc; ++p) {
        for (std::size_t i = 0; i < oh; ++i) {
          Real* dst = gx.data() + (p * h + i / f) * w;
          const Real* src = g.data() + (p * oh + i) * ow;
          for (std::size_t j = 0; j < ow; ++j) dst[j / f] += src[j];
        }
      }
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor maxpool2d(const Tensor& x, int kernel, int stride) {
  if (kernel < 1 || stride < 1) {
    throw ConfigError("maxpool2d: kernel and stride must be >= 1, got " + std::to_string(kernel) + "/" +
                      std::to_string(stride));
  }
  require_rank4(x, "maxpool2d", "input");
  const std::size_t k = static_cast<std::size_t>(kernel), s = static_cast<std::size_t>(stride);
  const std::size_t nc = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < k || w < k) throw ContractError("maxpool2d: window " + std::to_string(k) + " larger than " + x.shape().str());
  const std::size_t oh = (h - k) / s + 1, ow = (w - k) / s + 1;
  Tensor out(Shape{x.dim(0), x.dim(1), oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t p = 0; p < nc; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = (p * h + i * s) * w + j * s;
        for (std::size_t a = 0; a < k; ++a) {
          for (std::size_t b = 0; b < k; ++b) {
            const std::size_t idx = (p * h + i * s + a) * w + j * s + b;
            if (xd[idx] > xd[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + i) * ow + j;
        od[o] = xd[best];
        argmax[o] = best;
      }
    }
  }
  if (detail::needs_grad({&x})) {
    detail::record("maxpool2d", {x}, out, [x, argmax = std::move(argmax)](std::span<const Real> g) {
      std::vector<Real> gx(x.numel(), Real{0});
      for (std::size_t o = 0; o < g.size(); ++o) gx[argmax[o]] += g[o];
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (Real v : x.data()) acc += v;
  Tensor out = Tensor::scalar(static_cast<Real>(acc));
  check_finite(out, "sum");
  if (detail::needs_grad({&x})) {
    detail::record("sum", {x}, out, [x](std::span<const Real> g) {
      std::vector<Real> gx(x.numel(), g[0]);
      detail::accumulate_grad(x, gx);
    });
  }
  return out;
}

SEGFORGE_NAMESPACE_END
