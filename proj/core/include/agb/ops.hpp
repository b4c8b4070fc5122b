#pragma once

#include <span>
#include <vector>

#include "agb/tape.hpp"

// Differentiable primitives. Every function records one node on the tape of
// its first argument. Instantiated for float and double.
namespace agb::ad {

/// Output size and leading padding of "same"-style convolution:
/// out = ceil(in / stride), padding split with the smaller half in front.
struct ConvGeometry {
  std::size_t out;
  std::size_t pad_before;
};
ConvGeometry same_geometry(std::size_t in, std::size_t kernel, std::size_t stride);

/// Cross-correlation of x[B,Cin,H,W] with kernel[Cout,Cin,kh,kw] plus bias[Cout],
/// zero "same" padding, output [B,Cout,ceil(H/s),ceil(W/s)].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& kernel, const Tensor<T>& bias, std::size_t stride = 1);

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, double slope = 0.2);

enum class BnMode { train, eval };

/// Per-channel running statistics of a batch-norm layer.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;
  double momentum = 0.9;

  static RunningStats identity(std::size_t channels) {
    return {std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1)), 0.9};
  }
  friend bool operator==(const RunningStats&, const RunningStats&) = default;
};

inline constexpr double kBatchNormEps = 1e-5;

/// Batch normalization over (B,H,W) per channel. Train mode normalizes with
/// batch statistics and, when stats is non-null, folds them into the running
/// estimates; eval mode uses the running estimates.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BnMode mode,
                       RunningStats<T>* stats);

/// x[B,F] · weight[O,F]^T + bias[O].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// Concatenation along axis 1. All other dims must agree.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> inputs);

/// Mean of squared differences over all elements.
template <typename T>
Tensor<T> mse(const Tensor<T>& pred, const Tensor<T>& target);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product of equal shapes.
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double c);

// x times a one-element tensor s.
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, const Tensor<T>& s);

template <typename T>
Tensor<T> sum(const Tensor<T>& x);

template <typename T>
Tensor<T> mean(const Tensor<T>& x);

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// |z| per pixel of a two-channel (re, im) tensor [B,2,...] -> [B,1,...].
/// A floor of 1e-12 inside the root keeps the derivative finite at 0.
template <typename T>
Tensor<T> complex_magnitude(const Tensor<T>& x);

}  // namespace agb::ad
