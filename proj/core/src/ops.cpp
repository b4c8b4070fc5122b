#include "agb/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include <Eigen/Core>

#include "agb/parallel.hpp"

namespace agb::ad {
namespace {

using Index = std::ptrdiff_t;

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (!(a == b)) throw ShapeError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.rank() != rank) throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + s.str());
}

template <typename T>
T dot(const T* a, const T* b, Index n) {
  T acc = 0;
#pragma omp simd reduction(+ : acc)
  for (Index i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, Index n) {
#pragma omp simd
  for (Index i = 0; i < n; ++i) y[i] += alpha * x[i];
}

struct ConvDims {
  Index batch, cin, h, w, cout, kh, kw, stride, ho, wo, py, px;

  [[nodiscard]] Index patch() const { return cin * kh * kw; }
  [[nodiscard]] Index out_plane() const { return ho * wo; }
};

// Output columns [lo, hi) whose input column ox*stride + kx - px lies inside the image.
std::pair<Index, Index> valid_cols(const ConvDims& d, Index kx) {
  const Index off = kx - d.px;
  Index lo = off >= 0 ? 0 : (-off + d.stride - 1) / d.stride;
  Index hi = (d.w - 1 - off) >= 0 ? (d.w - 1 - off) / d.stride + 1 : 0;
  hi = std::min(hi, d.wo);
  lo = std::min(lo, hi);
  return {lo, hi};
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// col[(ci*kh + ky)*kw + kx, oy*wo + ox] = x[b, ci, oy*s + ky - py, ox*s + kx - px], zero outside.
template <typename T>
void im2col(const ConvDims& d, const T* x, Index b, T* col) {
  for (Index ci = 0; ci < d.cin; ++ci) {
    const T* xin = x + (b * d.cin + ci) * d.h * d.w;
    for (Index ky = 0; ky < d.kh; ++ky)
      for (Index kx = 0; kx < d.kw; ++kx) {
        T* row = col + ((ci * d.kh + ky) * d.kw + kx) * d.out_plane();
        const auto [lo, hi] = valid_cols(d, kx);
        for (Index oy = 0; oy < d.ho; ++oy) {
          const Index iy = oy * d.stride + ky - d.py;
          T* orow = row + oy * d.wo;
          if (iy < 0 || iy >= d.h) {
            std::fill(orow, orow + d.wo, T(0));
            continue;
          }
          const T* irow = xin + iy * d.w;
          std::fill(orow, orow + lo, T(0));
          if (d.stride == 1) {
            std::copy(irow + lo + kx - d.px, irow + hi + kx - d.px, orow + lo);
          } else {
            for (Index ox = lo; ox < hi; ++ox) orow[ox] = irow[ox * d.stride + kx - d.px];
          }
          std::fill(orow + hi, orow + d.wo, T(0));
        }
      }
  }
}

// Adjoint of im2col: scatter-add columns back into gx[b].
template <typename T>
void col2im(const ConvDims& d, const T* col, Index b, T* gx) {
  for (Index ci = 0; ci < d.cin; ++ci) {
    T* gin = gx + (b * d.cin + ci) * d.h * d.w;
    for (Index ky = 0; ky < d.kh; ++ky)
      for (Index kx = 0; kx < d.kw; ++kx) {
        const T* row = col + ((ci * d.kh + ky) * d.kw + kx) * d.out_plane();
        const auto [lo, hi] = valid_cols(d, kx);
        for (Index oy = 0; oy < d.ho; ++oy) {
          const Index iy = oy * d.stride + ky - d.py;
          if (iy < 0 || iy >= d.h) continue;
          T* grow = gin + iy * d.w + kx - d.px;
          const T* crow = row + oy * d.wo;
          if (d.stride == 1) {
#pragma omp simd
            for (Index ox = lo; ox < hi; ++ox) grow[ox] += crow[ox];
          } else {
            for (Index ox = lo; ox < hi; ++ox) grow[ox * d.stride] += crow[ox];
          }
        }
      }
  }
}

}  // namespace

ConvGeometry same_geometry(std::size_t in, std::size_t kernel, std::size_t stride) {
  if (stride == 0 || kernel == 0) throw ShapeError("conv2d: kernel and stride must be positive");
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t pad_total = needed > in ? needed - in : 0;
  return {out, pad_total / 2};
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride) {
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  require_rank("conv2d input", xs, 4);
  require_rank("conv2d kernel", ks, 4);
  if (xs[1] != ks[1])
    throw ShapeError("conv2d: input has " + std::to_string(xs[1]) + " channels, kernel expects " + std::to_string(ks[1]));
  if (bias.shape().numel() != ks[0]) throw ShapeError("conv2d: bias size does not match output channels");
  const auto gy = same_geometry(xs[2], ks[2], stride);
  const auto gx = same_geometry(xs[3], ks[3], stride);
  const ConvDims d{static_cast<Index>(xs[0]), static_cast<Index>(xs[1]), static_cast<Index>(xs[2]),
                   static_cast<Index>(xs[3]), static_cast<Index>(ks[0]), static_cast<Index>(ks[2]),
                   static_cast<Index>(ks[3]), static_cast<Index>(stride), static_cast<Index>(gy.out),
                   static_cast<Index>(gx.out), static_cast<Index>(gy.pad_before), static_cast<Index>(gx.pad_before)};

  Shape out_shape{xs[0], ks[0], gy.out, gx.out};
  std::vector<T> out(out_shape.numel());
  const auto xv = x.value();
  const auto kv = kernel.value();
  const auto bv = bias.value();
  // Products run on owned (aligned) matrices: Eigen's kernels pick summation
  // order from buffer alignment, so mapped heap buffers are not reproducible.
  const RowMat<T> kmat = Eigen::Map<const RowMat<T>>(kv.data(), d.cout, d.patch());
  parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t i) {
    const auto b = static_cast<Index>(i);
    RowMat<T> col(d.patch(), d.out_plane());
    im2col(d, xv.data(), b, col.data());
    const RowMat<T> prod = kmat * col;
    T* o = out.data() + b * d.cout * d.out_plane();
    for (Index co = 0; co < d.cout; ++co)
      for (Index p = 0; p < d.out_plane(); ++p) o[co * d.out_plane() + p] = prod(co, p) + bv[static_cast<std::size_t>(co)];
  });

  return x.tape().record(
      "conv2d", std::move(out_shape), std::move(out), {x, kernel, bias},
      [d](std::span<const T> g, BackwardContext<T>& ctx) {
        const auto xin = ctx.input(0);
        const RowMat<T> kmat_t = Eigen::Map<const RowMat<T>>(ctx.input(1).data(), d.cout, d.patch()).transpose();
        auto gout = [&](Index b) {
          return RowMat<T>(Eigen::Map<const RowMat<T>>(g.data() + b * d.cout * d.out_plane(), d.cout, d.out_plane()));
        };
        if (ctx.needs_grad(0)) {
          auto gx = ctx.grad(0);
          parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t i) {
            const auto b = static_cast<Index>(i);
            const RowMat<T> col = kmat_t * gout(b);
            col2im(d, col.data(), b, gx.data());
          });
        }
        if (ctx.needs_grad(1)) {
          RowMat<T> acc = RowMat<T>::Zero(d.cout, d.patch());
          RowMat<T> col(d.patch(), d.out_plane());
          for (Index b = 0; b < d.batch; ++b) {
            im2col(d, xin.data(), b, col.data());
            acc.noalias() += gout(b) * col.transpose();
          }
          auto gk = ctx.grad(1);
          for (Index k = 0; k < acc.size(); ++k) gk[static_cast<std::size_t>(k)] += acc.data()[k];
        }
        if (ctx.needs_grad(2)) {
          auto gb = ctx.grad(2);
          for (Index b = 0; b < d.batch; ++b)
            for (Index co = 0; co < d.cout; ++co) {
              const T* row = g.data() + (b * d.cout + co) * d.out_plane();
              T s = 0;
              for (Index p = 0; p < d.out_plane(); ++p) s += row[p];
              gb[static_cast<std::size_t>(co)] += s;
            }
        }
      });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope) {
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("leaky_relu: slope must lie in (0, 1)");
  const auto xv = x.value();
  std::vector<T> out(xv.size());
  const T s = static_cast<T>(slope);
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : s * xv[i];
  return x.tape().record("leaky_relu", x.shape(), std::move(out), {x},
                         [s](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto xin = ctx.input(0);
                           auto gx = ctx.grad(0);
                           for (std::size_t i = 0; i < g.size(); ++i) gx[i] += xin[i] > T(0) ? g[i] : s * g[i];
                         });
}

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BnMode mode,
                       RunningStats<T>* stats) {
  const auto& xs = x.shape();
  require_rank("batch_norm2d", xs, 4);
  const std::size_t B = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (gamma.shape().numel() != C || beta.shape().numel() != C)
    throw ShapeError("batch_norm2d: affine parameters must have one entry per channel");
  const std::size_t count = B * HW;
  if (mode == BnMode::train && count < 2) throw ShapeError("batch_norm2d: degenerate batch (B*H*W < 2) in train mode");
  if (mode == BnMode::eval && (!stats || stats->mean.size() != C || stats->var.size() != C))
    throw ShapeError("batch_norm2d: eval mode requires running statistics for every channel");

  const auto xv = x.value();
  const auto gv = gamma.value();
  const auto bv = beta.value();
  std::vector<T> mean_c(C), inv_std(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (mode == BnMode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < HW; ++i) s += xv[(b * C + c) * HW + i];
      const double mu = s / static_cast<double>(count);
      double v = 0.0;
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t i = 0; i < HW; ++i) {
          const double dlt = xv[(b * C + c) * HW + i] - mu;
          v += dlt * dlt;
        }
      v /= static_cast<double>(count);
      mean_c[c] = static_cast<T>(mu);
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(v + kBatchNormEps));
      if (stats) {
        if (stats->mean.size() != C) *stats = RunningStats<T>::identity(C);
        const double m = stats->momentum;
        stats->mean[c] = static_cast<T>(m * stats->mean[c] + (1.0 - m) * mu);
        stats->var[c] = static_cast<T>(m * stats->var[c] + (1.0 - m) * v);
      }
    } else {
      mean_c[c] = stats->mean[c];
      inv_std[c] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(stats->var[c]) + kBatchNormEps));
    }
  }
  std::vector<T> out(xv.size());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) {
        const std::size_t k = (b * C + c) * HW + i;
        out[k] = gv[c] * (xv[k] - mean_c[c]) * inv_std[c] + bv[c];
      }

  return x.tape().record(
      mode == BnMode::train ? "batch_norm2d[train]" : "batch_norm2d[eval]", xs, std::move(out), {x, gamma, beta},
      [B, C, HW, mode, mean_c = std::move(mean_c), inv_std = std::move(inv_std)](std::span<const T> g,
                                                                                 BackwardContext<T>& ctx) {
        const auto xin = ctx.input(0);
        const auto gam = ctx.input(1);
        auto gx = ctx.grad(0);
        auto gg = ctx.grad(1);
        auto gb = ctx.grad(2);
        const double n = static_cast<double>(B * HW);
        for (std::size_t c = 0; c < C; ++c) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t k = (b * C + c) * HW + i;
              const double xhat = (static_cast<double>(xin[k]) - mean_c[c]) * inv_std[c];
              sum_g += g[k];
              sum_gx += g[k] * xhat;
            }
          if (!gg.empty()) gg[c] += static_cast<T>(sum_gx);
          if (!gb.empty()) gb[c] += static_cast<T>(sum_g);
          if (gx.empty()) continue;
          const double scale = static_cast<double>(gam[c]) * inv_std[c];
          for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
              const std::size_t k = (b * C + c) * HW + i;
              if (mode == BnMode::train) {
                const double xhat = (static_cast<double>(xin[k]) - mean_c[c]) * inv_std[c];
                gx[k] += static_cast<T>(scale * (g[k] - sum_g / n - xhat * sum_gx / n));
              } else {
                gx[k] += static_cast<T>(scale * g[k]);
              }
            }
        }
      });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank("linear input", x.shape(), 2);
  require_rank("linear weight", weight.shape(), 2);
  const std::size_t B = x.shape()[0], F = x.shape()[1], O = weight.shape()[0];
  if (weight.shape()[1] != F) throw ShapeError("linear: weight expects " + std::to_string(weight.shape()[1]) +
                                                " features, input has " + std::to_string(F));
  if (bias.shape().numel() != O) throw ShapeError("linear: bias size does not match outputs");
  const auto xv = x.value();
  const auto wv = weight.value();
  const auto bv = bias.value();
  std::vector<T> out(B * O);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      out[b * O + o] = bv[o] + dot(xv.data() + b * F, wv.data() + o * F, static_cast<Index>(F));
  return x.tape().record("linear", Shape{B, O}, std::move(out), {x, weight, bias},
                         [B, F, O](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto xin = ctx.input(0);
                           const auto win = ctx.input(1);
                           auto gx = ctx.grad(0);
                           auto gw = ctx.grad(1);
                           auto gb = ctx.grad(2);
                           for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t o = 0; o < O; ++o) {
                               const T go = g[b * O + o];
                               if (!gx.empty()) axpy(go, win.data() + o * F, gx.data() + b * F, static_cast<Index>(F));
                               if (!gw.empty()) axpy(go, xin.data() + b * F, gw.data() + o * F, static_cast<Index>(F));
                               if (!gb.empty()) gb[o] += go;
                             }
                         });
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> inputs) {
  if (inputs.empty()) throw ShapeError("concat_channels: empty input list");
  const auto& first = inputs.front().shape();
  if (first.rank() < 2) throw ShapeError("concat_channels: inputs need rank >= 2");
  const std::size_t B = first[0];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < first.rank(); ++i) inner *= first[i];
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& t : inputs) {
    const auto& s = t.shape();
    bool ok = s.rank() == first.rank() && s[0] == B;
    for (std::size_t i = 2; ok && i < s.rank(); ++i) ok = s[i] == first[i];
    if (!ok) throw ShapeError("concat_channels: incompatible shapes " + first.str() + " and " + s.str());
    channels.push_back(s[1]);
    total += s[1];
  }
  auto dims = first.dims();
  dims[1] = total;
  std::vector<T> out(B * total * inner);
  std::size_t off = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const auto v = inputs[k].value();
    const std::size_t block = channels[k] * inner;
    for (std::size_t b = 0; b < B; ++b)
      std::copy_n(v.data() + b * block, block, out.data() + b * total * inner + off);
    off += block;
  }
  return inputs.front().tape().record(
      "concat_channels", Shape(std::move(dims)), std::move(out), std::vector<Tensor<T>>(inputs.begin(), inputs.end()),
      [B, inner, total, channels](std::span<const T> g, BackwardContext<T>& ctx) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < channels.size(); ++k) {
          const std::size_t block = channels[k] * inner;
          auto gk = ctx.grad(k);
          if (!gk.empty())
            for (std::size_t b = 0; b < B; ++b)
              for (std::size_t i = 0; i < block; ++i) gk[b * block + i] += g[b * total * inner + off + i];
          off += block;
        }
      });
}

template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target) {
  require_same_shape("mse", pred.shape(), target.shape());
  const auto p = pred.value();
  const auto t = target.value();
  if (p.empty()) throw ShapeError("mse: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
    s += d * d;
  }
  const double n = static_cast<double>(p.size());
  return pred.tape().record("mse", Shape{1}, {static_cast<T>(s / n)}, {pred, target},
                            [n](std::span<const T> g, BackwardContext<T>& ctx) {
                              const auto p = ctx.input(0);
                              const auto t = ctx.input(1);
                              const double c = 2.0 * static_cast<double>(g[0]) / n;
                              auto gp = ctx.grad(0);
                              auto gt = ctx.grad(1);
                              for (std::size_t i = 0; i < p.size(); ++i) {
                                const double d = c * (static_cast<double>(p[i]) - static_cast<double>(t[i]));
                                if (!gp.empty()) gp[i] += static_cast<T>(d);
                                if (!gt.empty()) gt[i] -= static_cast<T>(d);
                              }
                            });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("add", a.shape(), b.shape());
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return a.tape().record("add", a.shape(), std::move(out), {a, b}, [](std::span<const T> g, BackwardContext<T>& ctx) {
    for (std::size_t k = 0; k < 2; ++k) {
      auto gk = ctx.grad(k);
      for (std::size_t i = 0; i < gk.size(); ++i) gk[i] += g[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("sub", a.shape(), b.shape());
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape().record("sub", a.shape(), std::move(out), {a, b}, [](std::span<const T> g, BackwardContext<T>& ctx) {
    auto ga = ctx.grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    auto gb = ctx.grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape("mul", a.shape(), b.shape());
  const auto av = a.value();
  const auto bv = b.value();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return a.tape().record("mul", a.shape(), std::move(out), {a, b}, [](std::span<const T> g, BackwardContext<T>& ctx) {
    const auto av = ctx.input(0);
    const auto bv = ctx.input(1);
    auto ga = ctx.grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    auto gb = ctx.grad(1);
    for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double c) {
  const auto xv = x.value();
  const T ct = static_cast<T>(c);
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = ct * xv[i];
  return x.tape().record("scale", x.shape(), std::move(out), {x}, [ct](std::span<const T> g, BackwardContext<T>& ctx) {
    auto gx = ctx.grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += ct * g[i];
  });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s) {
  if (s.shape().numel() != 1) throw ShapeError("mul_scalar: factor must have one element, got " + s.shape().str());
  const auto xv = x.value();
  const T sv = s.value()[0];
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = sv * xv[i];
  return x.tape().record("mul_scalar", x.shape(), std::move(out), {x, s},
                         [](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto xv = ctx.input(0);
                           const T sv = ctx.input(1)[0];
                           auto gx = ctx.grad(0);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += sv * g[i];
                           auto gs = ctx.grad(1);
                           if (!gs.empty()) {
                             double acc = 0.0;
                             for (std::size_t i = 0; i < xv.size(); ++i) acc += static_cast<double>(g[i]) * xv[i];
                             gs[0] += static_cast<T>(acc);
                           }
                         });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  double s = 0.0;
  for (auto v : x.value()) s += v;
  return x.tape().record("sum", Shape{1}, {static_cast<T>(s)}, {x}, [](std::span<const T> g, BackwardContext<T>& ctx) {
    auto gx = ctx.grad(0);
    for (auto& v : gx) v += g[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const auto xv = x.value();
  if (xv.empty()) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (auto v : xv) s += v;
  const double n = static_cast<double>(xv.size());
  return x.tape().record("mean", Shape{1}, {static_cast<T>(s / n)}, {x},
                         [n](std::span<const T> g, BackwardContext<T>& ctx) {
                           auto gx = ctx.grad(0);
                           const T c = static_cast<T>(static_cast<double>(g[0]) / n);
                           for (auto& v : gx) v += c;
                         });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape.numel() != x.shape().numel())
    throw ShapeError("reshape: " + x.shape().str() + " cannot become " + shape.str());
  const auto xv = x.value();
  return x.tape().record("reshape", std::move(shape), std::vector<T>(xv.begin(), xv.end()), {x},
                         [](std::span<const T> g, BackwardContext<T>& ctx) {
                           auto gx = ctx.grad(0);
                           for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
                         });
}

template <typename T>
Tensor<T> complex_magnitude(const Tensor<T>& x) {
  const auto& s = x.shape();
  if (s.rank() < 2 || s[1] != 2) throw ShapeError("complex_magnitude: expected [B,2,...], got " + s.str());
  const std::size_t B = s[0];
  const std::size_t inner = s.numel() / (2 * B);
  auto dims = s.dims();
  dims[1] = 1;
  const auto xv = x.value();
  std::vector<T> out(B * inner);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < inner; ++i) {
      const double re = xv[(2 * b) * inner + i];
      const double im = xv[(2 * b + 1) * inner + i];
      out[b * inner + i] = static_cast<T>(std::sqrt(re * re + im * im + 1e-12));
    }
  return x.tape().record("complex_magnitude", Shape(std::move(dims)), std::move(out), {x},
                         [B, inner](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto xv = ctx.input(0);
                           const auto mag = ctx.output();
                           auto gx = ctx.grad(0);
                           for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t i = 0; i < inner; ++i) {
                               const T c = g[b * inner + i] / mag[b * inner + i];
                               gx[(2 * b) * inner + i] += c * xv[(2 * b) * inner + i];
                               gx[(2 * b + 1) * inner + i] += c * xv[(2 * b + 1) * inner + i];
                             }
                         });
}

#define AGB_INSTANTIATE_OPS(T)                                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);                    \
  template Tensor<T> leaky_relu(const Tensor<T>&, double);                                                         \
  template Tensor<T> batch_norm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BnMode, RunningStats<T>*); \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> concat_channels(std::span<const Tensor<T>>);                                                  \
  template Tensor<T> mse(const Tensor<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                      \
  template Tensor<T> scale(const Tensor<T>&, double);                                                              \
  template Tensor<T> mul_scalar(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> sum(const Tensor<T>&);                                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                                       \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                             \
  template Tensor<T> complex_magnitude(const Tensor<T>&);

AGB_INSTANTIATE_OPS(float)
AGB_INSTANTIATE_OPS(double)

#undef AGB_INSTANTIATE_OPS

}  // namespace agb::ad
