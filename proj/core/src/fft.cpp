#include "agb/fft.hpp"

#include <bit>
#include <cmath>
#include <map>
#include <numbers>
#include <vector>

namespace agb {
namespace {

using cd = std::complex<double>;

// Twiddles and, for power-of-two sizes, the bit-reversal permutation.
struct Plan {
  std::size_t n = 0;
  std::vector<cd> twiddle;
  std::vector<std::size_t> reverse;
};

const Plan& plan_for(std::size_t n) {
  thread_local std::map<std::size_t, Plan> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  Plan p;
  p.n = n;
  p.twiddle.resize(n);
  for (std::size_t k = 0; k < n; ++k)
    p.twiddle[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
  if (std::has_single_bit(n)) {
    const int bits = std::countr_zero(n);
    p.reverse.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t r = 0;
      for (int b = 0; b < bits; ++b) r |= ((i >> b) & 1U) << (bits - 1 - b);
      p.reverse[i] = r;
    }
  }
  return cache.emplace(n, std::move(p)).first->second;
}

// Unnormalized in-place 1D transform of contiguous data.
void fft1d(cd* data, const Plan& p, bool inverse, std::vector<cd>& scratch) {
  const std::size_t n = p.n;
  if (n <= 1) return;
  const auto& w = p.twiddle;
  if (!p.reverse.empty()) {
    for (std::size_t i = 0; i < n; ++i)
      if (p.reverse[i] > i) std::swap(data[i], data[p.reverse[i]]);
    for (std::size_t len = 2; len <= n; len <<= 1) {
      const std::size_t half = len / 2;
      const std::size_t step = n / len;
      for (std::size_t start = 0; start < n; start += len) {
        for (std::size_t j = 0; j < half; ++j) {
          const cd tw = inverse ? std::conj(w[j * step]) : w[j * step];
          const cd u = data[start + j];
          const cd v = data[start + j + half] * tw;
          data[start + j] = u + v;
          data[start + j + half] = u - v;
        }
      }
    }
    return;
  }
  scratch.assign(data, data + n);
  for (std::size_t k = 0; k < n; ++k) {
    cd acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const cd tw = w[(k * j) % n];
      acc += scratch[j] * (inverse ? std::conj(tw) : tw);
    }
    data[k] = acc;
  }
}

ComplexImage run(const ComplexImage& img, bool inverse) {
  const std::size_t h = img.height(), w = img.width();
  std::vector<cd> buf(h * w);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = img[i];
  transform2d(buf, h, w, inverse);
  ComplexImage out(h, w);
  for (std::size_t i = 0; i < buf.size(); ++i) out.set(i, buf[i]);
  return out;
}

}  // namespace

void transform2d(std::span<cd> data, std::size_t height, std::size_t width, bool inverse) {
  if (data.size() != height * width) throw ShapeError("transform2d: buffer size does not match dims");
  std::vector<cd> scratch, column(height);
  const Plan& pw = plan_for(width);
  const Plan& ph = plan_for(height);
  for (std::size_t y = 0; y < height; ++y) fft1d(data.data() + y * width, pw, inverse, scratch);
  for (std::size_t x = 0; x < width; ++x) {
    for (std::size_t y = 0; y < height; ++y) column[y] = data[y * width + x];
    fft1d(column.data(), ph, inverse, scratch);
    for (std::size_t y = 0; y < height; ++y) data[y * width + x] = column[y];
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(height * width));
  for (auto& v : data) v *= s;
}

ComplexImage fft2(const ComplexImage& img) { return run(img, false); }

ComplexImage ifft2(const ComplexImage& k) { return run(k, true); }

ComplexImage dft2_reference(const ComplexImage& img) {
  const std::size_t h = img.height(), w = img.width();
  if (h * w > kDftReferenceMaxPixels)
    throw ShapeError("dft2_reference: " + std::to_string(h * w) + " pixels exceeds the cost guard");
  ComplexImage out(h, w);
  const double s = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      cd acc = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = -2.0 * std::numbers::pi *
                             (static_cast<double>((u * y) % h) / static_cast<double>(h) +
                              static_cast<double>((v * x) % w) / static_cast<double>(w));
          acc += img.at(y, x) * std::polar(1.0, ang);
        }
      out.set(u, v, acc * s);
    }
  return out;
}

namespace ad {
namespace {

template <typename T>
void transform_batch(std::span<const T> in, std::span<T> out, std::size_t batch, std::size_t h, std::size_t w,
                     bool inverse, bool accumulate) {
  const std::size_t plane = h * w;
  std::vector<cd> buf(plane);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* re = in.data() + 2 * b * plane;
    const T* im = re + plane;
    for (std::size_t i = 0; i < plane; ++i) buf[i] = {static_cast<double>(re[i]), static_cast<double>(im[i])};
    transform2d(buf, h, w, inverse);
    T* ore = out.data() + 2 * b * plane;
    T* oim = ore + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      if (accumulate) {
        ore[i] += static_cast<T>(buf[i].real());
        oim[i] += static_cast<T>(buf[i].imag());
      } else {
        ore[i] = static_cast<T>(buf[i].real());
        oim[i] = static_cast<T>(buf[i].imag());
      }
    }
  }
}

template <typename T>
Tensor<T> fourier_node(const Tensor<T>& x, bool inverse) {
  const auto& s = x.shape();
  if (s.rank() != 4 || s[1] != 2)
    throw ShapeError(std::string(inverse ? "ifft2_node" : "fft2_node") + ": expected [B,2,H,W], got " + s.str());
  const std::size_t B = s[0], H = s[2], W = s[3];
  std::vector<T> out(s.numel());
  transform_batch<T>(x.value(), out, B, H, W, inverse, false);
  return x.tape().record(inverse ? "ifft2" : "fft2", s, std::move(out), {x},
                         [B, H, W, inverse](std::span<const T> g, BackwardContext<T>& ctx) {
                           transform_batch<T>(g, ctx.grad(0), B, H, W, !inverse, true);
                         });
}

}  // namespace

template <typename T>
Tensor<T> fft2_node(const Tensor<T>& x) {
  return fourier_node(x, false);
}

template <typename T>
Tensor<T> ifft2_node(const Tensor<T>& x) {
  return fourier_node(x, true);
}

template Tensor<float> fft2_node(const Tensor<float>&);
template Tensor<double> fft2_node(const Tensor<double>&);
template Tensor<float> ifft2_node(const Tensor<float>&);
template Tensor<double> ifft2_node(const Tensor<double>&);

}  // namespace ad
}  // namespace agb
