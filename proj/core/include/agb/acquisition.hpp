#pragma once

#include <cstdint>
#include <vector>

#include "agb/complex_image.hpp"

namespace agb {

/// Complex coil sensitivities, sum-of-squares normalized: sum_i |s_i|^2 = 1.
struct SensitivityMaps {
  std::vector<ComplexImage> coils;

  [[nodiscard]] std::size_t n_coils() const { return coils.size(); }
  [[nodiscard]] std::size_t height() const { return coils.empty() ? 0 : coils.front().height(); }
  [[nodiscard]] std::size_t width() const { return coils.empty() ? 0 : coils.front().width(); }
  friend bool operator==(const SensitivityMaps&, const SensitivityMaps&) = default;
};

/// Per-coil k-space, DC at index (0, 0).
struct KSpaceData {
  std::vector<ComplexImage> coils;

  [[nodiscard]] std::size_t n_coils() const { return coils.size(); }
  friend bool operator==(const KSpaceData&, const KSpaceData&) = default;
};

/// Binary phase-encode sampling pattern. `lines[x]` selects k-space column x in
/// storage order (DC at 0); the mask is constant along y.
struct SamplingMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> lines;
  double acceleration = 1.0;
  std::size_t center_lines = 0;
  std::uint64_t seed = 0;

  [[nodiscard]] bool at(std::size_t /*y*/, std::size_t x) const { return lines[x] != 0; }
  [[nodiscard]] std::size_t sampled_lines() const;
  [[nodiscard]] double achieved_acceleration() const;
  /// Lines reordered so that DC sits at index width/2.
  [[nodiscard]] std::vector<std::uint8_t> centered_lines() const;

  static SamplingMask full(std::size_t height, std::size_t width);
  friend bool operator==(const SamplingMask&, const SamplingMask&) = default;
};

/// Ground truth, its undersampled multi-coil k-space and the zero-filled image.
struct TrainingSample {
  ComplexImage m_f;
  KSpaceData k_u;
  SamplingMask mask;
  SensitivityMaps maps;
  ComplexImage m_z;

  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

// Storage index of centered phase-encode line c, and its inverse.
std::size_t centered_to_storage(std::size_t c, std::size_t width);
std::size_t storage_to_centered(std::size_t k, std::size_t width);

/// Sum of soft-edged random ellipses with a smooth phase field, peak magnitude 1.
ComplexImage gen_phantom(std::uint64_t seed, std::size_t height, std::size_t width, std::size_t n_ellipses);

/// Smooth Gaussian-bump coil profiles centred on the image border.
SensitivityMaps gen_sensitivity_maps(std::uint64_t seed, std::size_t n_coils, std::size_t height, std::size_t width);

/// k_i = F(s_i ⊙ m).
KSpaceData acquire(const ComplexImage& m, const SensitivityMaps& maps);

inline constexpr double kVdsProbabilityFloor = 0.05;

/// 1D variable-density mask: the center_lines central lines plus lines drawn
/// without replacement with probability proportional to
/// max(1 - d/d_max, kVdsProbabilityFloor), until round(W/R) lines are sampled.
SamplingMask make_vds_mask(std::size_t height, std::size_t width, std::size_t center_lines, double acceleration,
                           std::uint64_t seed);

/// K_u = M ⊙ K on every coil.
KSpaceData undersample(const KSpaceData& k, const SamplingMask& mask);

/// Σ_i conj(s_i) ⊙ F^{-1}(k_i).
ComplexImage reconstruct(const KSpaceData& k, const SensitivityMaps& maps);

inline constexpr double kMaxRotationDegrees = 20.0;

ComplexImage flip_horizontal(const ComplexImage& m);

/// Bilinear rotation about the image centre; samples outside the grid read 0.
ComplexImage rotate(const ComplexImage& m, double degrees);

ComplexImage apply_augmentation(const ComplexImage& m, bool flip, double degrees);

/// Random flip (p = 1/2) then a rotation drawn uniformly from ±20°.
ComplexImage augment(const ComplexImage& m_f, std::uint64_t seed);

TrainingSample make_sample(const ComplexImage& m_f, const SensitivityMaps& maps, const SamplingMask& mask);

}  // namespace agb
