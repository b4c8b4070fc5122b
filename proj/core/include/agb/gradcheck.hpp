#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "agb/tape.hpp"

namespace agb::ad {

struct GradCheckOptions {
  double eps = 1e-6;
  // 0 checks every coordinate; otherwise a seeded random subset of this size.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

template <typename T>
using ScalarFunction = std::function<Tensor<T>(Tape<T>&, const Tensor<T>&)>;

/// Compares backward() against central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) coordinate by coordinate.
/// Relative error uses max(|a|, |b|, 1e-8) as the denominator.
template <typename T>
GradCheckResult grad_check(const ScalarFunction<T>& f, const Shape& shape, std::span<const T> x0,
                           GradCheckOptions opts = {});

}  // namespace agb::ad
