#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "agb/tape.hpp"

namespace agb::ad {

template <typename T>
struct Param {
  std::string name;
  Shape shape;
  std::vector<T> value;
};

template <typename T>
class BoundParams;

/// Ordered collection of named trainable arrays.
template <typename T>
class ParamSet {
 public:
  Param<T>& add(std::string name, Shape shape, std::vector<T> value);

  [[nodiscard]] bool contains(std::string_view name) const { return index_.contains(std::string(name)); }
  [[nodiscard]] const Param<T>& at(std::string_view name) const;
  [[nodiscard]] Param<T>& at(std::string_view name);
  [[nodiscard]] std::size_t size() const { return params_.size(); }
  [[nodiscard]] std::size_t element_count() const;

  [[nodiscard]] auto begin() { return params_.begin(); }
  [[nodiscard]] auto end() { return params_.end(); }
  [[nodiscard]] auto begin() const { return params_.begin(); }
  [[nodiscard]] auto end() const { return params_.end(); }

  /// Records every parameter as a leaf on the tape.
  BoundParams<T> bind(Tape<T>& tape, bool requires_grad) const;

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      const auto& p = a.params_[i];
      const auto& q = b.params_[i];
      if (p.name != q.name || !(p.shape == q.shape) || p.value != q.value) return false;
    }
    return true;
  }

 private:
  std::vector<Param<T>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
class BoundParams {
 public:
  [[nodiscard]] const Tensor<T>& at(std::string_view name) const;
  [[nodiscard]] bool contains(std::string_view name) const { return tensors_.contains(std::string(name)); }
  void set(const std::string& name, Tensor<T> t) { tensors_.insert_or_assign(name, t); }
  [[nodiscard]] const std::map<std::string, Tensor<T>>& tensors() const { return tensors_; }

 private:
  std::map<std::string, Tensor<T>> tensors_;
};

struct AdamConfig {
  double beta_m = 0.9;
  double beta_v = 0.999;
  double eps = 1e-8;
  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// First/second moments aligned with a ParamSet's order.
template <typename T>
struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  static AdamState zeros_like(const ParamSet<T>& params, AdamConfig cfg = {});
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

enum class Direction { minimize, maximize };

/// One bias-corrected Adam update of every parameter in the set. Throws when a
/// parameter has no gradient entry.
template <typename T>
void adam_step(ParamSet<T>& params, const BoundParams<T>& bound, const GradientMap<T>& grads, AdamState<T>& state,
               double lr, Direction direction);

/// Same update with gradients given directly in parameter order.
template <typename T>
void adam_step(ParamSet<T>& params, const std::vector<std::vector<T>>& grads, AdamState<T>& state, double lr,
               Direction direction);

/// Clamps every element of the selected parameters to [-c, c].
template <typename T>
void clip_params(ParamSet<T>& params, double c, const std::function<bool(const std::string&)>& select = {});

// ---- implementation ----

template <typename T>
Param<T>& ParamSet<T>::add(std::string name, Shape shape, std::vector<T> value) {
  if (index_.contains(name)) throw Error("duplicate parameter name " + name);
  if (shape.numel() != value.size()) throw ShapeError("parameter " + name + " value does not match " + shape.str());
  index_.emplace(name, params_.size());
  params_.push_back({std::move(name), std::move(shape), std::move(value)});
  return params_.back();
}

template <typename T>
const Param<T>& ParamSet<T>::at(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("unknown parameter " + std::string(name));
  return params_[it->second];
}

template <typename T>
Param<T>& ParamSet<T>::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("unknown parameter " + std::string(name));
  return params_[it->second];
}

template <typename T>
std::size_t ParamSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
BoundParams<T> ParamSet<T>::bind(Tape<T>& tape, bool requires_grad) const {
  BoundParams<T> out;
  for (const auto& p : params_) out.set(p.name, tape.leaf(p.shape, p.value, requires_grad, "param:" + p.name));
  return out;
}

template <typename T>
const Tensor<T>& BoundParams<T>::at(std::string_view name) const {
  auto it = tensors_.find(std::string(name));
  if (it == tensors_.end()) throw Error("parameter not bound: " + std::string(name));
  return it->second;
}

}  // namespace agb::ad
