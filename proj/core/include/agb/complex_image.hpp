#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "agb/error.hpp"

namespace agb {

/// H×W complex image stored as paired real/imaginary planes (row-major).
/// Construction rejects non-finite entries.
class ComplexImage {
 public:
  ComplexImage() = default;
  ComplexImage(std::size_t height, std::size_t width)
      : height_(height), width_(width), re_(height * width, 0.0), im_(height * width, 0.0) {}

  ComplexImage(std::size_t height, std::size_t width, std::vector<double> re, std::vector<double> im)
      : height_(height), width_(width), re_(std::move(re)), im_(std::move(im)) {
    if (re_.size() != height * width || im_.size() != height * width)
      throw ShapeError("ComplexImage: plane sizes do not match " + std::to_string(height) + "x" + std::to_string(width));
    for (std::size_t i = 0; i < re_.size(); ++i)
      if (!std::isfinite(re_[i]) || !std::isfinite(im_[i])) throw NumericError("ComplexImage: non-finite entry");
  }

  [[nodiscard]] std::size_t height() const { return height_; }
  [[nodiscard]] std::size_t width() const { return width_; }
  [[nodiscard]] std::size_t size() const { return re_.size(); }

  [[nodiscard]] std::span<const double> re() const { return re_; }
  [[nodiscard]] std::span<const double> im() const { return im_; }
  [[nodiscard]] std::span<double> re() { return re_; }
  [[nodiscard]] std::span<double> im() { return im_; }

  [[nodiscard]] std::complex<double> at(std::size_t y, std::size_t x) const {
    const auto k = y * width_ + x;
    return {re_[k], im_[k]};
  }
  void set(std::size_t y, std::size_t x, std::complex<double> v) {
    const auto k = y * width_ + x;
    re_[k] = v.real();
    im_[k] = v.imag();
  }
  [[nodiscard]] std::complex<double> operator[](std::size_t k) const { return {re_[k], im_[k]}; }
  void set(std::size_t k, std::complex<double> v) {
    re_[k] = v.real();
    im_[k] = v.imag();
  }

  [[nodiscard]] bool same_dims(const ComplexImage& o) const { return height_ == o.height_ && width_ == o.width_; }

  [[nodiscard]] double norm_squared() const {
    double s = 0.0;
    for (std::size_t i = 0; i < re_.size(); ++i) s += re_[i] * re_[i] + im_[i] * im_[i];
    return s;
  }

  friend bool operator==(const ComplexImage&, const ComplexImage&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> re_;
  std::vector<double> im_;
};

}  // namespace agb
