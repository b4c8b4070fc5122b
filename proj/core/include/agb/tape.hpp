#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "agb/error.hpp"
#include "agb/shape.hpp"

namespace agb::ad {

using NodeId = std::int64_t;

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; the tape owns the data.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  [[nodiscard]] NodeId id() const { return id_; }
  [[nodiscard]] Tape<T>& tape() const { return *tape_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }
  [[nodiscard]] const Shape& shape() const;
  [[nodiscard]] std::span<const T> value() const;
  [[nodiscard]] bool requires_grad() const;
  [[nodiscard]] T item() const;

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = -1;
};

/// Gradients keyed by node id. Holds an entry for every node that was reached
/// from the backward root and requires a gradient.
template <typename T>
class GradientMap {
 public:
  [[nodiscard]] bool contains(NodeId id) const { return entries_.contains(id); }
  [[nodiscard]] bool contains(const Tensor<T>& t) const { return contains(t.id()); }

  [[nodiscard]] const std::vector<T>& at(NodeId id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error("no gradient recorded for node " + std::to_string(id));
    return it->second;
  }
  [[nodiscard]] const std::vector<T>& at(const Tensor<T>& t) const { return at(t.id()); }

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }
  [[nodiscard]] const std::map<NodeId, std::vector<T>>& entries() const { return entries_; }

  void insert(NodeId id, std::vector<T> g) { entries_.insert_or_assign(id, std::move(g)); }

 private:
  std::map<NodeId, std::vector<T>> entries_;
};

template <typename T>
class BackwardContext;

template <typename T>
struct Node {
  using BackwardFn = std::function<void(std::span<const T> grad_out, BackwardContext<T>& ctx)>;

  NodeId id = -1;
  std::string op;
  Shape shape;
  std::vector<T> value;
  bool requires_grad = false;
  std::vector<NodeId> parents;
  BackwardFn backward;
};

/// View handed to a node's backward function: parent values and lazily
/// allocated gradient accumulators for parents that require gradients.
template <typename T>
class BackwardContext {
 public:
  BackwardContext(const Tape<T>& tape, const Node<T>& node, std::vector<std::vector<T>>& grads)
      : tape_(tape), node_(node), grads_(grads) {}

  [[nodiscard]] std::span<const T> input(std::size_t k) const;
  [[nodiscard]] const Shape& input_shape(std::size_t k) const;
  [[nodiscard]] std::span<const T> output() const { return node_.value; }
  [[nodiscard]] bool needs_grad(std::size_t k) const;
  // Zero-initialized on first access. Empty span if parent k has no gradient.
  [[nodiscard]] std::span<T> grad(std::size_t k);

 private:
  const Tape<T>& tape_;
  const Node<T>& node_;
  std::vector<std::vector<T>>& grads_;
};

struct BackwardOptions {
  // Nodes with id below this bound are not visited. Any node that every path
  // from the root to a target passes through may serve as the bound.
  NodeId stop_below = 0;
};

/// Append-only record of a computation. Node ids increase in creation order,
/// so id order is a topological order of the graph.
template <typename T>
class Tape {
 public:
  using BackwardFn = typename Node<T>::BackwardFn;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor<T> leaf(Shape shape, std::vector<T> value, bool requires_grad = false, std::string op = "leaf") {
    if (shape.numel() != value.size())
      throw ShapeError("leaf value has " + std::to_string(value.size()) + " elements, shape " + shape.str());
    Node<T> n;
    n.id = static_cast<NodeId>(nodes_.size());
    n.op = std::move(op);
    n.shape = std::move(shape);
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return {this, nodes_.back().id};
  }

  Tensor<T> constant(Shape shape, std::vector<T> value) { return leaf(std::move(shape), std::move(value), false, "constant"); }

  Tensor<T> zeros(Shape shape) {
    const auto n = shape.numel();
    return leaf(std::move(shape), std::vector<T>(n, T(0)), false, "zeros");
  }

  /// Records an op node. requires_grad is inherited from the parents; the
  /// backward function is dropped when no parent needs a gradient.
  Tensor<T> record(std::string op, Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                   BackwardFn backward) {
    if (shape.numel() != value.size())
      throw ShapeError(op + ": value has " + std::to_string(value.size()) + " elements, shape " + shape.str());
    Node<T> n;
    n.id = static_cast<NodeId>(nodes_.size());
    n.op = std::move(op);
    n.shape = std::move(shape);
    n.value = std::move(value);
    for (const auto& p : parents) {
      if (&p.tape() != this) throw Error(n.op + ": parent recorded on a different tape");
      n.parents.push_back(p.id());
      n.requires_grad = n.requires_grad || node(p.id()).requires_grad;
    }
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return {this, nodes_.back().id};
  }

  [[nodiscard]] const Node<T>& node(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a scalar root. Accumulation follows decreasing node id,
  /// which makes the result independent of anything but the graph itself.
  GradientMap<T> backward(const Tensor<T>& root, BackwardOptions opts = {}) const {
    const auto& r = node(root.id());
    if (r.value.size() != 1) throw ShapeError("backward root must be scalar, got shape " + r.shape.str());
    GradientMap<T> out;
    if (!r.requires_grad) return out;
    std::vector<std::vector<T>> grads(static_cast<std::size_t>(root.id()) + 1);
    grads.back().assign(1, T(1));
    for (NodeId id = root.id(); id >= opts.stop_below; --id) {
      auto& g = grads[static_cast<std::size_t>(id)];
      if (g.empty()) continue;
      const auto& n = node(id);
      if (n.backward) {
        BackwardContext<T> ctx(*this, n, grads);
        n.backward(g, ctx);
      }
    }
    for (NodeId id = std::max<NodeId>(opts.stop_below, 0); id <= root.id(); ++id) {
      auto& g = grads[static_cast<std::size_t>(id)];
      if (!g.empty()) out.insert(id, std::move(g));
    }
    return out;
  }

 private:
  // deque keeps references to recorded nodes valid while the tape grows.
  std::deque<Node<T>> nodes_;
};

template <typename T>
const Shape& Tensor<T>::shape() const {
  return tape_->node(id_).shape;
}

template <typename T>
std::span<const T> Tensor<T>::value() const {
  return tape_->node(id_).value;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return tape_->node(id_).requires_grad;
}

template <typename T>
T Tensor<T>::item() const {
  const auto v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape().str());
  return v[0];
}

template <typename T>
std::span<const T> BackwardContext<T>::input(std::size_t k) const {
  return tape_.node(node_.parents.at(k)).value;
}

template <typename T>
const Shape& BackwardContext<T>::input_shape(std::size_t k) const {
  return tape_.node(node_.parents.at(k)).shape;
}

template <typename T>
bool BackwardContext<T>::needs_grad(std::size_t k) const {
  return tape_.node(node_.parents.at(k)).requires_grad;
}

template <typename T>
std::span<T> BackwardContext<T>::grad(std::size_t k) {
  const auto& p = tape_.node(node_.parents.at(k));
  if (!p.requires_grad) return {};
  auto& g = grads_[static_cast<std::size_t>(p.id)];
  if (g.empty()) g.assign(p.value.size(), T(0));
  return g;
}

}  // namespace agb::ad
