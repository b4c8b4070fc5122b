#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "agb/acquisition.hpp"
#include "agb/ops.hpp"
#include "agb/optim.hpp"

namespace agb {

/// DCI-Net shape. The full-scale preset is 20 iterations, growth 5, 40 kernels.
struct GeneratorConfig {
  std::size_t n_iterations = 4;
  std::size_t growth = 2;
  std::size_t kernels = 8;
  std::size_t kernel_size = 5;
  std::size_t n_coils = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  double slope = 0.2;

  static GeneratorConfig desk_scale() { return {}; }
  static GeneratorConfig full_scale() { return {20, 5, 40, 5, 8, 256, 256, 0.2}; }

  // Channels entering every conv unit: direct input plus G dense predecessors.
  [[nodiscard]] std::size_t conv_input_channels() const { return 2 * (growth + 1); }
  void validate() const;
};

enum class CriticInput { complex, magnitude };

/// Patch critic: four stride-2 conv + batch-norm + leaky-ReLU stages and a
/// linear head.
struct CriticConfig {
  std::array<std::size_t, 4> widths{16, 32, 64, 128};
  std::size_t kernel_size = 4;
  CriticInput input = CriticInput::complex;
  // false drops the zero-filled image from the critic input (plain WGAN).
  bool conditional = true;
  double slope = 0.2;
  std::size_t height = 32;
  std::size_t width = 32;

  static CriticConfig desk_scale() { return {}; }
  static CriticConfig full_scale() { return {{64, 128, 256, 512}, 4, CriticInput::complex, true, 0.2, 256, 256}; }

  [[nodiscard]] std::size_t input_channels() const;
  [[nodiscard]] std::size_t head_features() const;
  void validate() const;
};

template <typename T>
struct ModelParams {
  ad::ParamSet<T> generator;
  ad::ParamSet<T> critic;
  // Non-trainable running statistics, one entry per critic batch-norm layer.
  std::vector<ad::RunningStats<T>> critic_bn;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Parameter names.
std::string conv_weight_name(std::size_t iteration, std::size_t layer);
std::string conv_bias_name(std::size_t iteration, std::size_t layer);
std::string dc_weight_name(std::size_t iteration);
bool is_critic_bn_affine(const std::string& name);

/// He-uniform conv/linear weights (bound sqrt(6 / fan_in)), zero biases,
/// every DC weight 1, batch-norm gamma 1 and beta 0.
template <typename T>
ModelParams<T> init_params(const GeneratorConfig& gen, const CriticConfig& critic, std::uint64_t seed);

std::size_t generator_param_count(const GeneratorConfig& cfg);

/// A minibatch packed into dense arrays.
///   m_z, m_f: [B,2,H,W]
///   k_u, mask: [B*C,2,H,W] (mask expanded to both channels)
///   maps:      [B*C,2,H,W]
template <typename T>
struct Batch {
  std::size_t size = 0;
  std::size_t n_coils = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<T> m_z;
  std::vector<T> m_f;
  std::vector<T> k_u;
  std::vector<T> mask;
  std::vector<T> maps;

  [[nodiscard]] Shape image_shape() const { return {size, 2, height, width}; }
  [[nodiscard]] Shape coil_shape() const { return {size * n_coils, 2, height, width}; }
};

template <typename T>
Batch<T> make_batch(std::span<const TrainingSample* const> samples);

template <typename T>
Batch<T> make_batch(std::span<const TrainingSample> samples);

// Image <-> two-channel tensor layout helpers.
template <typename T>
void write_image(const ComplexImage& img, std::span<T> re_im);
template <typename T>
ComplexImage read_image(std::span<const T> re_im, std::size_t height, std::size_t width);

/// Acquisition constants of a batch recorded on a tape.
template <typename T>
struct AcquisitionNodes {
  ad::Tensor<T> m_z;
  ad::Tensor<T> k_u;
  ad::Tensor<T> mask;
  ad::Tensor<T> maps;
  std::size_t n_coils = 0;
};

template <typename T>
AcquisitionNodes<T> record_batch(ad::Tape<T>& tape, const Batch<T>& batch);

namespace ad {

/// [B,2,H,W] image times each coil sensitivity -> [B*C,2,H,W].
template <typename T>
Tensor<T> coil_expand(const Tensor<T>& x, const Tensor<T>& maps, std::size_t n_coils);

/// Σ_i conj(s_i) ⊙ y_i over the coils of each item: [B*C,2,H,W] -> [B,2,H,W].
template <typename T>
Tensor<T> coil_combine(const Tensor<T>& y, const Tensor<T>& maps, std::size_t n_coils);

}  // namespace ad

/// m_in - λ · Σ_i conj(s_i) ⊙ F^{-1}(M ⊙ F(s_i ⊙ m_in) - K_u,i).
template <typename T>
ad::Tensor<T> dc_unit(const ad::Tensor<T>& m_in, const AcquisitionNodes<T>& acq, const ad::Tensor<T>& dc_weight);

/// Three 5×5 conv + bias + leaky-ReLU stages: 2(G+1) -> k -> k -> 2 channels.
template <typename T>
ad::Tensor<T> conv_unit(const ad::Tensor<T>& x, const ad::BoundParams<T>& params, std::size_t iteration,
                        const GeneratorConfig& cfg);

/// Which earlier outputs fed each iteration's conv unit: inputs[i][j] is the
/// index of the j-th concatenated image (0 is m_z), or -1 for a zero placeholder.
struct DenseTrace {
  std::vector<std::vector<int>> inputs;
};

/// x_0 = m_z; x_i = dc_unit(x_{i-1} + conv_unit(concat(x_{i-1}, ..., x_{i-1-G})));
/// returns x_N.
template <typename T>
ad::Tensor<T> dci_forward(const AcquisitionNodes<T>& acq, const ad::BoundParams<T>& params,
                          const GeneratorConfig& cfg, DenseTrace* trace = nullptr);

/// Batch-norm handling for one critic evaluation. In train mode a null stats
/// pointer leaves the running statistics untouched.
template <typename T>
struct CriticNorm {
  ad::BnMode mode = ad::BnMode::train;
  std::vector<ad::RunningStats<T>>* stats = nullptr;
};

/// Critic value per batch item, shape [B,1].
template <typename T>
ad::Tensor<T> patchgan_forward(const ad::Tensor<T>& m_z, const ad::Tensor<T>& candidate,
                               const ad::BoundParams<T>& params, const CriticConfig& cfg, CriticNorm<T> norm);

}  // namespace agb
