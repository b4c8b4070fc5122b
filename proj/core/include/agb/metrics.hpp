#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "agb/complex_image.hpp"

namespace agb {

/// 100 · ‖m_g − m_f‖² / ‖m_f‖² over real and imaginary parts.
double nmse(const ComplexImage& m_g, const ComplexImage& m_f);

enum class EmbedderKind { projection, downsample };

struct EmbedderConfig {
  EmbedderKind kind = EmbedderKind::projection;
  std::uint64_t seed = 7;
  // Output dimension. For downsample it must be a square whose side divides
  // both image dims.
  std::size_t dim = 16;
};

/// One feature row per image, computed from magnitudes. The projection kind
/// applies a fixed Gaussian matrix scaled by 1/sqrt(H·W); downsample
/// average-pools to sqrt(dim) × sqrt(dim) and flattens.
Eigen::MatrixXd embed(std::span<const ComplexImage> images, const EmbedderConfig& cfg);

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues down to -1e-8 are clamped to 0.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

/// Fréchet distance between Gaussians fitted to the rows of a and b
/// (unbiased covariances). Each side needs more rows than columns.
double frechet_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Epoch minimizing the sum of the z-normalized series over epochs ≥ start.
/// Falls back to the raw sum when either series is constant there, and to all
/// epochs when fewer than two reach start. Ties go to the earliest epoch.
std::size_t select_model(std::span<const std::size_t> epochs, std::span<const double> nmse_series,
                         std::span<const double> fid_series, std::size_t start_epoch);

}  // namespace agb
