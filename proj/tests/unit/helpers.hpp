#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "agb/acquisition.hpp"
#include "agb/ops.hpp"
#include "agb/rng.hpp"

namespace agb::test {

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline ComplexImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  auto re = random_vector(h * w, seed);
  auto im = random_vector(h * w, seed + 1000);
  return {h, w, std::move(re), std::move(im)};
}

// Direct six-loop cross-correlation with the library's same-padding geometry.
inline std::vector<double> naive_conv(const std::vector<double>& x, const std::vector<double>& k,
                                      const std::vector<double>& b, std::size_t batch, std::size_t cin,
                                      std::size_t h, std::size_t w, std::size_t cout, std::size_t kh,
                                      std::size_t kw, std::size_t stride) {
  const auto gy = ad::same_geometry(h, kh, stride);
  const auto gx = ad::same_geometry(w, kw, stride);
  std::vector<double> out(batch * cout * gy.out * gx.out);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < gy.out; ++y)
        for (std::size_t xo = 0; xo < gx.out; ++xo) {
          double s = b[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const auto iy = static_cast<long>(y * stride + i) - static_cast<long>(gy.pad_before);
                const auto ix = static_cast<long>(xo * stride + j) - static_cast<long>(gx.pad_before);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                s += x[((n * cin + c) * h + iy) * w + ix] * k[((o * cin + c) * kh + i) * kw + j];
              }
          out[((n * cout + o) * gy.out + y) * gx.out + xo] = s;
        }
  return out;
}

inline std::vector<TrainingSample> toy_samples(std::size_t n, std::size_t size, std::size_t coils, std::uint64_t seed,
                                               bool full_mask = false) {
  std::vector<TrainingSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto m = gen_phantom(seed * 1000 + i, size, size, 4);
    const auto maps = gen_sensitivity_maps(seed * 1000 + i, coils, size, size);
    const auto mask = full_mask ? SamplingMask::full(size, size) : make_vds_mask(size, size, 2, 4.0, seed * 1000 + i);
    out.push_back(make_sample(m, maps, mask));
  }
  return out;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const ComplexImage& a, const ComplexImage& b) {
  return std::max(max_abs_diff(a.re(), b.re()), max_abs_diff(a.im(), b.im()));
}

}  // namespace agb::test
