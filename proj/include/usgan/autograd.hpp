#pragma once

// Minimal reverse-mode differentiation over Tensor values. Every op that
// sees a parent requiring gradients records a closure that, given the
// node's accumulated gradient, adds its contribution into the parents.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "usgan/tensor.hpp"

namespace usgan {

namespace detail {
inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.empty() && !value.empty()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool has_grad() const { return !grad.empty(); }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Var constant(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    return Var(std::move(n));
  }
  static Var parameter(Tensor<T> value) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
  }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_->has_grad(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad_buffer() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  /// Same value, cut from the graph.
  Var detach() const { return constant(node_->value); }

  /// Scalar value of a single-element variable.
  T item() const { return node_->value[0]; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds the result node of an op. The closure is kept only when grad mode
/// is on and some parent requires gradients.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents, std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(parents.size());
      for (const auto& p : parents) n->parents.push_back(p.node_ptr());
      n->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(n));
}

/// Accumulates d(root)/d(leaf) into every reachable leaf that requires grad.
/// The root must hold exactly one element.
template <typename T>
void backward(const Var<T>& root) {
  if (!root.requires_grad()) return;
  if (root.value().size() != 1) throw ShapeError("backward() root must be a scalar, got " + shape_str(root.shape()));

  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{root.node(), 0}};
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && n->has_grad()) {
      n->backward(*n);
      // Interior gradients are no longer needed once propagated.
      n->grad = Tensor<T>();
    }
  }
}

}  // namespace usgan
