#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every op result holds shared pointers to the nodes it was computed from and
// a closure that maps its gradient onto theirs. backward() topologically sorts
// the reachable subgraph and runs the closures in reverse order. The graph is
// released together with the last Tensor referencing its root.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "xrfmamba/errors.hpp"

namespace xrf::ad {

/// Tensor storage. Eigen peels unaligned heads before vectorizing, so plain
/// heap blocks would make results depend on where the allocator put them.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
  }
};

/// Thread-local switch; when off, op results carry no graph.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

class NoGradGuard {
 public:
  NoGradGuard() : previous_(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
class Tensor {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape) {
    const auto n = numel(shape);
    return from(std::move(shape), Buffer<T>(n, T(0)));
  }

  static Tensor full(Shape shape, T value) {
    const auto n = numel(shape);
    return from(std::move(shape), Buffer<T>(n, value));
  }

  static Tensor from(Shape shape, std::span<const T> values) {
    return from(std::move(shape), Buffer<T>(values.begin(), values.end()));
  }

  static Tensor from(Shape shape, Buffer<T> values) {
    if (numel(shape) != values.size()) {
      throw ShapeError("tensor shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    return Tensor(std::move(node));
  }

  static Tensor scalar(T value) { return from({}, {value}); }

  /// Leaf that accumulates gradients.
  static Tensor parameter(Shape shape, Buffer<T> values) {
    auto t = from(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const NodePtr& node() const { return node_; }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }
  /// Mutable access; only meaningful on leaves or before the value is used.
  std::span<T> mutable_data() { return node_->value; }
  Buffer<T>& values() { return node_->value; }
  const Buffer<T>& values() const { return node_->value; }

  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  Buffer<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T item() const {
    if (size() != 1) throw ShapeError("item() on tensor " + shape_str(shape()));
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value[i]; }

  /// A leaf holding a copy of the value; severs the graph.
  Tensor detach() const { return from(shape(), values()); }

 private:
  NodePtr node_;
};

/// Wraps a freshly computed value into a graph node. The backward closure runs
/// only if at least one parent needs a gradient and grad mode is on.
template <typename T>
Tensor<T> make_result(Shape shape, Buffer<T> value,
                      std::initializer_list<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
  auto out = Tensor<T>::from(std::move(shape), std::move(value));
  if (!grad_mode()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& p : parents) {
    if (p.defined()) node.parents.push_back(p.node());
  }
  node.backward_fn = std::move(backward_fn);
  return out;
}

/// Gradient slot of a parent, or nullptr if it does not need one.
template <typename T>
T* grad_of(const Tensor<T>& t) {
  if (!t.defined() || !t.requires_grad()) return nullptr;
  t.node()->ensure_grad();
  return t.node()->grad.data();
}

/// Reverse pass from `root`, seeded with ones (root is normally a scalar).
template <typename T>
void backward(const Tensor<T>& root) {
  if (!root.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<T>* parent = node->parents[idx++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root.node()->ensure_grad();
  for (auto& g : root.node()->grad) g = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn) {
      node->ensure_grad();
      node->backward_fn(*node);
    }
  }
}

}  // namespace xrf::ad
