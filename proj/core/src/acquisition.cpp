#include "agb/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "agb/fft.hpp"
#include "agb/rng.hpp"

namespace agb {
namespace {

using cd = std::complex<double>;

void require_dims(const char* op, const ComplexImage& a, const ComplexImage& b) {
  if (!a.same_dims(b)) throw ShapeError(std::string(op) + ": image dimensions do not match");
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

}  // namespace

std::size_t SamplingMask::sampled_lines() const {
  return static_cast<std::size_t>(std::count_if(lines.begin(), lines.end(), [](auto v) { return v != 0; }));
}

double SamplingMask::achieved_acceleration() const {
  const auto n = sampled_lines();
  return n == 0 ? 0.0 : static_cast<double>(width) / static_cast<double>(n);
}

std::vector<std::uint8_t> SamplingMask::centered_lines() const {
  std::vector<std::uint8_t> out(width);
  for (std::size_t k = 0; k < width; ++k) out[storage_to_centered(k, width)] = lines[k];
  return out;
}

SamplingMask SamplingMask::full(std::size_t height, std::size_t width) {
  SamplingMask m;
  m.height = height;
  m.width = width;
  m.lines.assign(width, 1);
  m.acceleration = 1.0;
  m.center_lines = width;
  return m;
}

std::size_t centered_to_storage(std::size_t c, std::size_t width) { return (c + width - width / 2) % width; }

std::size_t storage_to_centered(std::size_t k, std::size_t width) { return (k + width / 2) % width; }

ComplexImage gen_phantom(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t n_ellipses) {
  if (height < 8 || width < 8) throw ConfigError("gen_phantom: image must be at least 8x8");
  if (n_ellipses < 1) throw ConfigError("gen_phantom: need at least one ellipse");
  Rng rng(seed);
  const double half_y = static_cast<double>(height) / 2.0;
  const double half_x = static_cast<double>(width) / 2.0;
  const double cy0 = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx0 = (static_cast<double>(width) - 1.0) / 2.0;
  constexpr double kExtent = 0.85;   // normalized radius bound for every ellipse
  constexpr double kEdgePixels = 1.0;

  std::vector<double> mag(height * width, 0.0);
  for (std::size_t e = 0; e < n_ellipses; ++e) {
    const double a = rng.uniform(0.12, 0.6);
    const double b = rng.uniform(0.12, 0.6);
    const double rmax = std::max(a, b);
    const double rho = (kExtent - rmax) * std::sqrt(rng.uniform());
    const double psi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double cu = rho * std::cos(psi), cv = rho * std::sin(psi);
    const double phi = rng.uniform(0.0, std::numbers::pi);
    const double intensity = rng.uniform(0.2, 1.0);
    const double cphi = std::cos(phi), sphi = std::sin(phi);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (static_cast<double>(x) - cx0) / half_x - cu;
        const double v = (static_cast<double>(y) - cy0) / half_y - cv;
        const double ur = cphi * u + sphi * v;
        const double vr = -sphi * u + cphi * v;
        const double d = std::sqrt((ur / a) * (ur / a) + (vr / b) * (vr / b));
        double w = 1.0;
        if (d > 0.0) {
          // Distance to the boundary along the ray from the centre, in pixels.
          const double px = u * half_x, py = v * half_y;
          const double dist = std::hypot(px, py) * (1.0 / d - 1.0);
          w = smoothstep((dist + kEdgePixels) / (2.0 * kEdgePixels));
        }
        mag[y * width + x] += intensity * w;
      }
  }

  double coef[6];
  for (auto& c : coef) c = rng.uniform(-0.6, 0.6);
  ComplexImage img(height, width);
  double peak = 0.0;
  for (auto v : mag) peak = std::max(peak, v);
  if (peak <= 0.0) throw NumericError("gen_phantom: empty phantom");
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) - cx0) / half_x;
      const double v = (static_cast<double>(y) - cy0) / half_y;
      const double phase = coef[0] + coef[1] * u + coef[2] * v + coef[3] * u * u + coef[4] * u * v + coef[5] * v * v;
      img.set(y, x, std::polar(mag[y * width + x] / peak, phase));
    }
  return img;
}

SensitivityMaps gen_sensitivity_maps(std::uint64_t seed, std::size_t n_coils, std::size_t height, std::size_t width) {
  if (n_coils < 1) throw ConfigError("gen_sensitivity_maps: need at least one coil");
  if (height == 0 || width == 0) throw ConfigError("gen_sensitivity_maps: empty image");
  Rng rng(seed);
  const double cy0 = (static_cast<double>(height) - 1.0) / 2.0;
  const double cx0 = (static_cast<double>(width) - 1.0) / 2.0;
  const double offset = rng.uniform(0.0, 2.0 * std::numbers::pi / static_cast<double>(n_coils));
  SensitivityMaps maps;
  for (std::size_t i = 0; i < n_coils; ++i) {
    const double theta = offset + 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_coils);
    const double cu = std::cos(theta), cv = std::sin(theta);
    const double sigma = rng.uniform(0.7, 1.0);
    const double p0 = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double pu = rng.uniform(-0.5, 0.5), pv = rng.uniform(-0.5, 0.5);
    ComplexImage s(height, width);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double u = (static_cast<double>(x) - cx0) / (static_cast<double>(width) / 2.0);
        const double v = (static_cast<double>(y) - cy0) / (static_cast<double>(height) / 2.0);
        const double r2 = (u - cu) * (u - cu) + (v - cv) * (v - cv);
        s.set(y, x, std::polar(std::exp(-r2 / (2.0 * sigma * sigma)), p0 + pu * u + pv * v));
      }
    maps.coils.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < height * width; ++k) {
    double ss = 0.0;
    for (const auto& c : maps.coils) ss += std::norm(c[k]);
    const double inv = 1.0 / std::sqrt(ss);
    for (auto& c : maps.coils) c.set(k, c[k] * inv);
  }
  return maps;
}

KSpaceData acquire(const ComplexImage& m, const SensitivityMaps& maps) {
  KSpaceData k;
  for (const auto& s : maps.coils) {
    require_dims("acquire", m, s);
    ComplexImage shaded(m.height(), m.width());
    for (std::size_t i = 0; i < m.size(); ++i) shaded.set(i, s[i] * m[i]);
    k.coils.push_back(fft2(shaded));
  }
  return k;
}

SamplingMask make_vds_mask(std::size_t height, std::size_t width, std::size_t center_lines, double acceleration,
                           std::uint64_t seed) {
  if (!(acceleration > 1.0)) throw ConfigError("make_vds_mask: acceleration R must be greater than 1");
  if (width == 0 || height == 0) throw ConfigError("make_vds_mask: empty image");
  const auto budget = static_cast<std::size_t>(std::lround(static_cast<double>(width) / acceleration));
  if (center_lines > budget)
    throw ConfigError("make_vds_mask: " + std::to_string(center_lines) + " center lines exceed the budget of " +
                      std::to_string(budget) + " lines");

  SamplingMask mask;
  mask.height = height;
  mask.width = width;
  mask.acceleration = acceleration;
  mask.center_lines = center_lines;
  mask.seed = seed;
  mask.lines.assign(width, 0);

  const std::size_t mid = width / 2;
  const std::size_t first = mid - std::min(mid, center_lines / 2);
  std::vector<std::uint8_t> centered(width, 0);
  for (std::size_t c = first; c < first + center_lines; ++c) centered[c] = 1;

  const double d_max = static_cast<double>(width) / 2.0;
  std::vector<std::size_t> pool;
  std::vector<double> weight;
  for (std::size_t c = 0; c < width; ++c) {
    if (centered[c]) continue;
    const double d = std::abs(static_cast<double>(c) - static_cast<double>(mid));
    pool.push_back(c);
    weight.push_back(std::max(1.0 - d / d_max, kVdsProbabilityFloor));
  }
  Rng rng(seed);
  for (std::size_t drawn = center_lines; drawn < budget; ++drawn) {
    double total = 0.0;
    for (auto w : weight) total += w;
    double r = rng.uniform() * total;
    std::size_t pick = pool.size() - 1;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (r < weight[i]) {
        pick = i;
        break;
      }
      r -= weight[i];
    }
    centered[pool[pick]] = 1;
    pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
    weight.erase(weight.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  for (std::size_t c = 0; c < width; ++c) mask.lines[centered_to_storage(c, width)] = centered[c];
  return mask;
}

KSpaceData undersample(const KSpaceData& k, const SamplingMask& mask) {
  KSpaceData out;
  for (const auto& coil : k.coils) {
    if (coil.height() != mask.height || coil.width() != mask.width)
      throw ShapeError("undersample: mask dimensions do not match k-space");
    ComplexImage u(coil.height(), coil.width());
    for (std::size_t y = 0; y < coil.height(); ++y)
      for (std::size_t x = 0; x < coil.width(); ++x)
        if (mask.at(y, x)) u.set(y, x, coil.at(y, x));
    out.coils.push_back(std::move(u));
  }
  return out;
}

ComplexImage reconstruct(const KSpaceData& k, const SensitivityMaps& maps) {
  if (k.n_coils() != maps.n_coils())
    throw ShapeError("reconstruct: " + std::to_string(k.n_coils()) + " k-space coils vs " +
                     std::to_string(maps.n_coils()) + " sensitivity maps");
  if (k.coils.empty()) throw ShapeError("reconstruct: no coils");
  ComplexImage out(k.coils.front().height(), k.coils.front().width());
  for (std::size_t i = 0; i < k.n_coils(); ++i) {
    require_dims("reconstruct", k.coils[i], maps.coils[i]);
    require_dims("reconstruct", k.coils[i], out);
    const auto img = ifft2(k.coils[i]);
    for (std::size_t p = 0; p < out.size(); ++p) out.set(p, out[p] + std::conj(maps.coils[i][p]) * img[p]);
  }
  return out;
}

ComplexImage flip_horizontal(const ComplexImage& m) {
  ComplexImage out(m.height(), m.width());
  for (std::size_t y = 0; y < m.height(); ++y)
    for (std::size_t x = 0; x < m.width(); ++x) out.set(y, x, m.at(y, m.width() - 1 - x));
  return out;
}

ComplexImage rotate(const ComplexImage& m, double degrees) {
  const std::size_t h = m.height(), w = m.width();
  const double t = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(t), s = std::sin(t);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0, cx = (static_cast<double>(w) - 1.0) / 2.0;
  auto sample = [&](std::ptrdiff_t y, std::ptrdiff_t x) -> cd {
    if (y < 0 || x < 0 || y >= static_cast<std::ptrdiff_t>(h) || x >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return m.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
  };
  ComplexImage out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      // Inverse map: source = R(-t) (p - centre) + centre.
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      const double fx = std::floor(sx), fy = std::floor(sy);
      const double ax = sx - fx, ay = sy - fy;
      const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
      const cd v = (1 - ay) * ((1 - ax) * sample(y0, x0) + ax * sample(y0, x0 + 1)) +
                   ay * ((1 - ax) * sample(y0 + 1, x0) + ax * sample(y0 + 1, x0 + 1));
      out.set(y, x, v);
    }
  return out;
}

ComplexImage apply_augmentation(const ComplexImage& m, bool flip, double degrees) {
  const ComplexImage flipped = flip ? flip_horizontal(m) : m;
  return degrees == 0.0 ? flipped : rotate(flipped, degrees);
}

ComplexImage augment(const ComplexImage& m_f, std::uint64_t seed) {
  Rng rng(seed);
  const bool flip = rng.uniform() < 0.5;
  const double angle = rng.uniform(-kMaxRotationDegrees, kMaxRotationDegrees);
  return apply_augmentation(m_f, flip, angle);
}

TrainingSample make_sample(const ComplexImage& m_f, const SensitivityMaps& maps, const SamplingMask& mask) {
  TrainingSample s;
  s.m_f = m_f;
  s.maps = maps;
  s.mask = mask;
  s.k_u = undersample(acquire(m_f, maps), mask);
  s.m_z = reconstruct(s.k_u, maps);
  return s;
}

}  // namespace agb
