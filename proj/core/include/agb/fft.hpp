#pragma once

#include <complex>
#include <span>

#include "agb/complex_image.hpp"
#include "agb/tape.hpp"

namespace agb {

// All transforms are unitary: both directions scale by 1/sqrt(H*W).
// k-space is stored with DC at index (0, 0); no fftshift is applied.

ComplexImage fft2(const ComplexImage& img);
ComplexImage ifft2(const ComplexImage& k);

inline constexpr std::size_t kDftReferenceMaxPixels = 4096;

/// Direct O((HW)^2) double sum with the same normalization. Test oracle;
/// rejects images above kDftReferenceMaxPixels.
ComplexImage dft2_reference(const ComplexImage& img);

/// In-place 2D transform of a row-major H×W buffer. Radix-2 for power-of-two
/// extents, direct 1D sums otherwise.
void transform2d(std::span<std::complex<double>> data, std::size_t height, std::size_t width, bool inverse);

namespace ad {

/// Unitary 2D DFT of each item of a [B,2,H,W] (re, im) tensor. The backward
/// pass applies the inverse transform, which is the adjoint of a unitary map.
template <typename T>
Tensor<T> fft2_node(const Tensor<T>& x);

template <typename T>
Tensor<T> ifft2_node(const Tensor<T>& x);

}  // namespace ad
}  // namespace agb
