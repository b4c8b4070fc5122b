#include "agb/networks.hpp"

#include <cmath>

#include "agb/fft.hpp"
#include "agb/rng.hpp"

namespace agb {
namespace {

std::string critic_name(const char* kind, std::size_t layer, const char* field) {
  return "critic." + std::string(kind) + std::to_string(layer) + "." + field;
}

template <typename T>
std::vector<T> he_uniform(Rng& rng, std::size_t count, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<T> w(count);
  for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
  return w;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (n_iterations < 1) throw ConfigError("generator: n_iterations must be >= 1");
  if (growth < 1) throw ConfigError("generator: growth must be >= 1");
  if (kernels < 1) throw ConfigError("generator: kernels must be >= 1");
  if (kernel_size % 2 == 0) throw ConfigError("generator: kernel_size must be odd");
  if (n_coils < 1) throw ConfigError("generator: n_coils must be >= 1");
  if (height < 1 || width < 1) throw ConfigError("generator: empty image");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("generator: leaky-ReLU slope must lie in (0, 1)");
}

std::size_t CriticConfig::input_channels() const {
  const std::size_t per_image = input == CriticInput::complex ? 2 : 1;
  return conditional ? 2 * per_image : per_image;
}

std::size_t CriticConfig::head_features() const {
  std::size_t h = height, w = width;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  return widths.back() * h * w;
}

void CriticConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("critic: images must be at least 16x16 for four stride-2 stages");
  for (auto w : widths)
    if (w < 1) throw ConfigError("critic: channel widths must be positive");
  if (kernel_size < 1) throw ConfigError("critic: kernel_size must be positive");
  if (!(slope > 0.0 && slope < 1.0)) throw ConfigError("critic: leaky-ReLU slope must lie in (0, 1)");
}

std::string conv_weight_name(std::size_t iteration, std::size_t layer) {
  return "gen.iter" + std::to_string(iteration) + ".conv" + std::to_string(layer) + ".weight";
}

std::string conv_bias_name(std::size_t iteration, std::size_t layer) {
  return "gen.iter" + std::to_string(iteration) + ".conv" + std::to_string(layer) + ".bias";
}

std::string dc_weight_name(std::size_t iteration) { return "gen.iter" + std::to_string(iteration) + ".dc_weight"; }

bool is_critic_bn_affine(const std::string& name) { return name.rfind("critic.bn", 0) == 0; }

std::size_t generator_param_count(const GeneratorConfig& cfg) {
  const std::size_t k2 = cfg.kernel_size * cfg.kernel_size;
  const std::size_t cin = cfg.conv_input_channels();
  const std::size_t k = cfg.kernels;
  const std::size_t per_iter = k2 * (cin * k + k * k + k * 2) + (k + k + 2) + 1;
  return cfg.n_iterations * per_iter;
}

template <typename T>
ModelParams<T> init_params(const GeneratorConfig& gen, const CriticConfig& critic, std::uint64_t seed) {
  gen.validate();
  critic.validate();
  ModelParams<T> mp;
  Rng rng(derive_seed(seed, {0x6e6574}));
  const std::size_t ks = gen.kernel_size;
  const std::size_t k = gen.kernels;
  for (std::size_t it = 0; it < gen.n_iterations; ++it) {
    const std::size_t cin[3] = {gen.conv_input_channels(), k, k};
    const std::size_t cout[3] = {k, k, 2};
    for (std::size_t l = 0; l < 3; ++l) {
      mp.generator.add(conv_weight_name(it, l), Shape{cout[l], cin[l], ks, ks},
                       he_uniform<T>(rng, cout[l] * cin[l] * ks * ks, cin[l] * ks * ks));
      mp.generator.add(conv_bias_name(it, l), Shape{cout[l]}, std::vector<T>(cout[l], T(0)));
    }
    mp.generator.add(dc_weight_name(it), Shape{1}, {T(1)});
  }

  std::size_t cin = critic.input_channels();
  const std::size_t ck = critic.kernel_size;
  for (std::size_t l = 0; l < critic.widths.size(); ++l) {
    const std::size_t cout = critic.widths[l];
    mp.critic.add(critic_name("conv", l, "weight"), Shape{cout, cin, ck, ck},
                  he_uniform<T>(rng, cout * cin * ck * ck, cin * ck * ck));
    mp.critic.add(critic_name("conv", l, "bias"), Shape{cout}, std::vector<T>(cout, T(0)));
    mp.critic.add(critic_name("bn", l, "gamma"), Shape{cout}, std::vector<T>(cout, T(1)));
    mp.critic.add(critic_name("bn", l, "beta"), Shape{cout}, std::vector<T>(cout, T(0)));
    mp.critic_bn.push_back(ad::RunningStats<T>::identity(cout));
    cin = cout;
  }
  const std::size_t features = critic.head_features();
  mp.critic.add("critic.linear.weight", Shape{1, features}, he_uniform<T>(rng, features, features));
  mp.critic.add("critic.linear.bias", Shape{1}, {T(0)});
  return mp;
}

template <typename T>
void write_image(const ComplexImage& img, std::span<T> re_im) {
  const std::size_t n = img.size();
  for (std::size_t i = 0; i < n; ++i) {
    re_im[i] = static_cast<T>(img.re()[i]);
    re_im[n + i] = static_cast<T>(img.im()[i]);
  }
}

template <typename T>
ComplexImage read_image(std::span<const T> re_im, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  std::vector<double> re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = static_cast<double>(re_im[i]);
    im[i] = static_cast<double>(re_im[n + i]);
  }
  return {height, width, std::move(re), std::move(im)};
}

template <typename T>
Batch<T> make_batch(std::span<const TrainingSample* const> samples) {
  if (samples.empty()) throw ShapeError("make_batch: empty batch");
  const auto& first = *samples.front();
  Batch<T> b;
  b.size = samples.size();
  b.n_coils = first.maps.n_coils();
  b.height = first.m_f.height();
  b.width = first.m_f.width();
  const std::size_t plane = b.height * b.width;
  b.m_z.resize(b.size * 2 * plane);
  b.m_f.resize(b.size * 2 * plane);
  b.k_u.resize(b.size * b.n_coils * 2 * plane);
  b.mask.resize(b.size * b.n_coils * 2 * plane);
  b.maps.resize(b.size * b.n_coils * 2 * plane);
  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& s = *samples[i];
    if (s.m_f.height() != b.height || s.m_f.width() != b.width || s.maps.n_coils() != b.n_coils ||
        s.k_u.n_coils() != b.n_coils)
      throw ShapeError("make_batch: samples have inconsistent dimensions");
    write_image<T>(s.m_z, std::span<T>(b.m_z).subspan(i * 2 * plane, 2 * plane));
    write_image<T>(s.m_f, std::span<T>(b.m_f).subspan(i * 2 * plane, 2 * plane));
    for (std::size_t c = 0; c < b.n_coils; ++c) {
      const std::size_t off = (i * b.n_coils + c) * 2 * plane;
      write_image<T>(s.k_u.coils[c], std::span<T>(b.k_u).subspan(off, 2 * plane));
      write_image<T>(s.maps.coils[c], std::span<T>(b.maps).subspan(off, 2 * plane));
      for (std::size_t y = 0; y < b.height; ++y)
        for (std::size_t x = 0; x < b.width; ++x) {
          const T m = s.mask.at(y, x) ? T(1) : T(0);
          b.mask[off + y * b.width + x] = m;
          b.mask[off + plane + y * b.width + x] = m;
        }
    }
  }
  return b;
}

template <typename T>
Batch<T> make_batch(std::span<const TrainingSample> samples) {
  std::vector<const TrainingSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch<T>(std::span<const TrainingSample* const>(ptrs));
}

template <typename T>
AcquisitionNodes<T> record_batch(ad::Tape<T>& tape, const Batch<T>& batch) {
  return {tape.constant(batch.image_shape(), batch.m_z), tape.constant(batch.coil_shape(), batch.k_u),
          tape.constant(batch.coil_shape(), batch.mask), tape.constant(batch.coil_shape(), batch.maps),
          batch.n_coils};
}

namespace ad {
namespace {

void check_coil_layout(const char* op, const Shape& image, const Shape& coil, std::size_t n_coils) {
  if (image.rank() != 4 || image[1] != 2 || coil.rank() != 4 || coil[1] != 2 || coil[0] != image[0] * n_coils ||
      coil[2] != image[2] || coil[3] != image[3])
    throw ShapeError(std::string(op) + ": image " + image.str() + " incompatible with coil stack " + coil.str());
}

// out_c += s * x  (conj_s: out_c += conj(s) * x) on (re, im) planes.
template <typename T>
void cmul_acc(const T* s, const T* x, T* out, std::size_t plane, bool conj_s) {
  const T* sr = s;
  const T* si = s + plane;
  const T* xr = x;
  const T* xi = x + plane;
  T* orr = out;
  T* oi = out + plane;
  if (conj_s) {
    for (std::size_t p = 0; p < plane; ++p) {
      orr[p] += sr[p] * xr[p] + si[p] * xi[p];
      oi[p] += sr[p] * xi[p] - si[p] * xr[p];
    }
  } else {
    for (std::size_t p = 0; p < plane; ++p) {
      orr[p] += sr[p] * xr[p] - si[p] * xi[p];
      oi[p] += sr[p] * xi[p] + si[p] * xr[p];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> coil_expand(const Tensor<T>& x, const Tensor<T>& maps, std::size_t n_coils) {
  check_coil_layout("coil_expand", x.shape(), maps.shape(), n_coils);
  const std::size_t B = x.shape()[0];
  const std::size_t plane = x.shape()[2] * x.shape()[3];
  const auto xv = x.value();
  const auto sv = maps.value();
  std::vector<T> out(maps.shape().numel(), T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < n_coils; ++c) {
      const std::size_t off = (b * n_coils + c) * 2 * plane;
      cmul_acc(sv.data() + off, xv.data() + b * 2 * plane, out.data() + off, plane, false);
    }
  return x.tape().record("coil_expand", maps.shape(), std::move(out), {x, maps},
                         [B, n_coils, plane](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto sv = ctx.input(1);
                           auto gx = ctx.grad(0);
                           if (gx.empty()) return;
                           for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t c = 0; c < n_coils; ++c) {
                               const std::size_t off = (b * n_coils + c) * 2 * plane;
                               cmul_acc(sv.data() + off, g.data() + off, gx.data() + b * 2 * plane, plane, true);
                             }
                         });
}

template <typename T>
Tensor<T> coil_combine(const Tensor<T>& y, const Tensor<T>& maps, std::size_t n_coils) {
  if (!(y.shape() == maps.shape())) throw ShapeError("coil_combine: coil stack and maps differ in shape");
  const auto& s = y.shape();
  if (s.rank() != 4 || s[1] != 2 || n_coils == 0 || s[0] % n_coils != 0)
    throw ShapeError("coil_combine: expected [B*C,2,H,W], got " + s.str());
  const std::size_t B = s[0] / n_coils;
  const std::size_t plane = s[2] * s[3];
  const auto yv = y.value();
  const auto sv = maps.value();
  std::vector<T> out(B * 2 * plane, T(0));
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < n_coils; ++c) {
      const std::size_t off = (b * n_coils + c) * 2 * plane;
      cmul_acc(sv.data() + off, yv.data() + off, out.data() + b * 2 * plane, plane, true);
    }
  return y.tape().record("coil_combine", Shape{B, 2, s[2], s[3]}, std::move(out), {y, maps},
                         [B, n_coils, plane](std::span<const T> g, BackwardContext<T>& ctx) {
                           const auto sv = ctx.input(1);
                           auto gy = ctx.grad(0);
                           if (gy.empty()) return;
                           for (std::size_t b = 0; b < B; ++b)
                             for (std::size_t c = 0; c < n_coils; ++c) {
                               const std::size_t off = (b * n_coils + c) * 2 * plane;
                               cmul_acc(sv.data() + off, g.data() + b * 2 * plane, gy.data() + off, plane, false);
                             }
                         });
}

}  // namespace ad

template <typename T>
ad::Tensor<T> dc_unit(const ad::Tensor<T>& m_in, const AcquisitionNodes<T>& acq, const ad::Tensor<T>& dc_weight) {
  if (!(m_in.shape() == acq.m_z.shape())) throw ShapeError("dc_unit: input " + m_in.shape().str() +
                                                           " does not match acquisition " + acq.m_z.shape().str());
  const auto shaded = ad::coil_expand(m_in, acq.maps, acq.n_coils);
  const auto k = ad::fft2_node(shaded);
  const auto residual = ad::sub(ad::mul(k, acq.mask), acq.k_u);
  const auto back = ad::coil_combine(ad::ifft2_node(residual), acq.maps, acq.n_coils);
  return ad::sub(m_in, ad::mul_scalar(back, dc_weight));
}

template <typename T>
ad::Tensor<T> conv_unit(const ad::Tensor<T>& x, const ad::BoundParams<T>& params, std::size_t iteration,
                        const GeneratorConfig& cfg) {
  if (x.shape().rank() != 4 || x.shape()[1] != cfg.conv_input_channels())
    throw ShapeError("conv_unit: expected " + std::to_string(cfg.conv_input_channels()) + " input channels, got " +
                     x.shape().str());
  ad::Tensor<T> h = x;
  for (std::size_t l = 0; l < 3; ++l) {
    h = ad::conv2d(h, params.at(conv_weight_name(iteration, l)), params.at(conv_bias_name(iteration, l)), 1);
    h = ad::leaky_relu(h, cfg.slope);
  }
  return h;
}

template <typename T>
ad::Tensor<T> dci_forward(const AcquisitionNodes<T>& acq, const ad::BoundParams<T>& params,
                          const GeneratorConfig& cfg, DenseTrace* trace) {
  cfg.validate();
  const auto& s = acq.m_z.shape();
  if (s[2] != cfg.height || s[3] != cfg.width || acq.n_coils != cfg.n_coils)
    throw ShapeError("dci_forward: batch " + s.str() + " with " + std::to_string(acq.n_coils) +
                     " coils does not match the generator configuration");
  auto& tape = acq.m_z.tape();
  std::vector<ad::Tensor<T>> outputs{acq.m_z};
  ad::Tensor<T> placeholder;
  if (trace) trace->inputs.clear();
  for (std::size_t i = 1; i <= cfg.n_iterations; ++i) {
    std::vector<ad::Tensor<T>> parts;
    std::vector<int> used;
    for (std::size_t j = 0; j <= cfg.growth; ++j) {
      // j-th connection is x_{i-1-j}.
      if (j + 1 <= i) {
        parts.push_back(outputs[i - 1 - j]);
        used.push_back(static_cast<int>(i - 1 - j));
      } else {
        if (!placeholder.valid()) placeholder = tape.zeros(s);
        parts.push_back(placeholder);
        used.push_back(-1);
      }
    }
    if (trace) trace->inputs.push_back(std::move(used));
    const auto dense = ad::concat_channels<T>(parts);
    const auto refined = ad::add(outputs[i - 1], conv_unit(dense, params, i - 1, cfg));
    outputs.push_back(dc_unit(refined, acq, params.at(dc_weight_name(i - 1))));
  }
  return outputs.back();
}

template <typename T>
ad::Tensor<T> patchgan_forward(const ad::Tensor<T>& m_z, const ad::Tensor<T>& candidate,
                               const ad::BoundParams<T>& params, const CriticConfig& cfg, CriticNorm<T> norm) {
  cfg.validate();
  const auto& s = candidate.shape();
  if (s.rank() != 4 || s[1] != 2 || s[2] != cfg.height || s[3] != cfg.width)
    throw ShapeError("patchgan_forward: candidate " + s.str() + " does not match the critic configuration");
  auto prepare = [&](const ad::Tensor<T>& img) {
    return cfg.input == CriticInput::magnitude ? ad::complex_magnitude(img) : img;
  };
  ad::Tensor<T> h;
  if (cfg.conditional) {
    if (!(m_z.shape() == s)) throw ShapeError("patchgan_forward: condition and candidate differ in shape");
    const std::vector<ad::Tensor<T>> pair{prepare(m_z), prepare(candidate)};
    h = ad::concat_channels<T>(pair);
  } else {
    h = prepare(candidate);
  }
  if (norm.stats && norm.stats->size() != cfg.widths.size())
    throw ShapeError("patchgan_forward: expected one running-statistics entry per stage");
  if (norm.mode == ad::BnMode::eval && !norm.stats)
    throw ShapeError("patchgan_forward: eval mode needs running statistics");
  for (std::size_t l = 0; l < cfg.widths.size(); ++l) {
    h = ad::conv2d(h, params.at(critic_name("conv", l, "weight")), params.at(critic_name("conv", l, "bias")), 2);
    h = ad::batch_norm2d(h, params.at(critic_name("bn", l, "gamma")), params.at(critic_name("bn", l, "beta")),
                         norm.mode, norm.stats ? &(*norm.stats)[l] : nullptr);
    h = ad::leaky_relu(h, cfg.slope);
  }
  const std::size_t B = s[0];
  h = ad::reshape(h, Shape{B, h.shape().numel() / B});
  return ad::linear(h, params.at("critic.linear.weight"), params.at("critic.linear.bias"));
}

#define AGB_INSTANTIATE_NETWORKS(T)                                                                                 \
  template ModelParams<T> init_params<T>(const GeneratorConfig&, const CriticConfig&, std::uint64_t);               \
  template void write_image<T>(const ComplexImage&, std::span<T>);                                                  \
  template ComplexImage read_image<T>(std::span<const T>, std::size_t, std::size_t);                                \
  template Batch<T> make_batch<T>(std::span<const TrainingSample* const>);                                          \
  template Batch<T> make_batch<T>(std::span<const TrainingSample>);                                                 \
  template AcquisitionNodes<T> record_batch<T>(ad::Tape<T>&, const Batch<T>&);                                      \
  template ad::Tensor<T> ad::coil_expand<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, std::size_t);               \
  template ad::Tensor<T> ad::coil_combine<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, std::size_t);              \
  template ad::Tensor<T> dc_unit<T>(const ad::Tensor<T>&, const AcquisitionNodes<T>&, const ad::Tensor<T>&);        \
  template ad::Tensor<T> conv_unit<T>(const ad::Tensor<T>&, const ad::BoundParams<T>&, std::size_t,                 \
                                      const GeneratorConfig&);                                                      \
  template ad::Tensor<T> dci_forward<T>(const AcquisitionNodes<T>&, const ad::BoundParams<T>&,                      \
                                        const GeneratorConfig&, DenseTrace*);                                       \
  template ad::Tensor<T> patchgan_forward<T>(const ad::Tensor<T>&, const ad::Tensor<T>&, const ad::BoundParams<T>&, \
                                             const CriticConfig&, CriticNorm<T>);

AGB_INSTANTIATE_NETWORKS(float)
AGB_INSTANTIATE_NETWORKS(double)

#undef AGB_INSTANTIATE_NETWORKS

}  // namespace agb
