#include "agb/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "agb/rng.hpp"

namespace agb::ad {

template <typename T>
GradCheckResult grad_check(const ScalarFunction<T>& f, const Shape& shape, std::span<const T> x0,
                           GradCheckOptions opts) {
  if (!(opts.eps >= 1e-7 && opts.eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  if (shape.numel() != x0.size()) throw ShapeError("grad_check: x0 does not match shape " + shape.str());

  std::vector<T> analytic;
  {
    Tape<T> tape;
    auto x = tape.leaf(shape, std::vector<T>(x0.begin(), x0.end()), true, "x");
    auto y = f(tape, x);
    if (y.shape().numel() != 1) throw ShapeError("grad_check: function output is not scalar: " + y.shape().str());
    auto grads = tape.backward(y);
    analytic = grads.contains(x) ? grads.at(x) : std::vector<T>(x0.size(), T(0));
  }

  auto eval = [&](const std::vector<T>& xv) {
    Tape<T> tape;
    auto x = tape.leaf(shape, xv, false, "x");
    return static_cast<double>(f(tape, x).item());
  };

  std::vector<std::size_t> coords(x0.size());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coords > 0 && opts.max_coords < coords.size()) {
    Rng rng(opts.seed);
    for (std::size_t i = 0; i < opts.max_coords; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
      std::swap(coords[i], coords[j]);
    }
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradCheckResult res;
  std::vector<T> xv(x0.begin(), x0.end());
  for (auto i : coords) {
    const T orig = xv[i];
    const T hi = static_cast<T>(orig + opts.eps);
    const T lo = static_cast<T>(orig - opts.eps);
    xv[i] = hi;
    const double fp = eval(xv);
    xv[i] = lo;
    const double fm = eval(xv);
    xv[i] = orig;
    // Divide by the representable step actually taken.
    const double numeric = (fp - fm) / (static_cast<double>(hi) - static_cast<double>(lo));
    const double a = analytic[i];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (res.checked == 0 || rel > res.max_relative_error) {
      res.max_relative_error = rel;
      res.worst_index = i;
      res.analytic = a;
      res.numeric = numeric;
    }
    ++res.checked;
  }
  return res;
}

template GradCheckResult grad_check(const ScalarFunction<float>&, const Shape&, std::span<const float>,
                                    GradCheckOptions);
template GradCheckResult grad_check(const ScalarFunction<double>&, const Shape&, std::span<const double>,
                                    GradCheckOptions);

}  // namespace agb::ad
