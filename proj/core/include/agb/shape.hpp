#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

namespace agb {

/// Dimension list of a dense row-major array. Image tensors use
/// (batch, channels, height, width).
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : dims_(dims) {}
  explicit Shape(std::vector<std::size_t> dims) : dims_(std::move(dims)) {}

  [[nodiscard]] std::size_t rank() const { return dims_.size(); }
  [[nodiscard]] std::size_t operator[](std::size_t i) const { return dims_.at(i); }
  [[nodiscard]] const std::vector<std::size_t>& dims() const { return dims_; }

  [[nodiscard]] std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims_) n *= d;
    return n;
  }

  [[nodiscard]] std::string str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < dims_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(dims_[i]);
    }
    return s + "]";
  }

  friend bool operator==(const Shape&, const Shape&) = default;

 private:
  std::vector<std::size_t> dims_;
};

}  // namespace agb
