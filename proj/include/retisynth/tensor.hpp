#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "retisynth/buffer.hpp"
#include "retisynth/errors.hpp"

namespace retisynth {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One vertex of the autodiff graph. `backward` reads this node's grad and
// accumulates into the grads of `inputs`.
template <typename T>
struct Node {
  Shape shape;
  Buffer<T> value;
  Buffer<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return inputs.empty(); }
  std::span<T> grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

/// Dense row-major float array with optional reverse-mode gradient tracking.
/// 4-D tensors follow NCHW. Copies share the underlying node; values produced
/// by an op are never mutated afterwards.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  BasicTensor();
  explicit BasicTensor(Shape shape, T fill = T(0));
  BasicTensor(Shape shape, std::vector<T> values);
  BasicTensor(Shape shape, Buffer<T>&& values);

  /// Leaf tensor that accumulates gradients.
  static BasicTensor parameter(Shape shape, std::vector<T> values);
  static BasicTensor scalar(T value);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->value.size(); }
  bool empty() const { return node_->value.empty(); }

  std::span<const T> data() const { return node_->value; }
  // Only meaningful on leaves (parameters, freshly assembled inputs).
  std::span<T> mutable_data() { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool has_grad() const { return node_->grad.size() == node_->value.size() && !node_->value.empty(); }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

  T item() const;
  T at(std::initializer_list<std::size_t> index) const;

  /// Copy of the values with no graph history.
  BasicTensor detach() const;
  /// Independent deep copy, keeping requires_grad but not gradients.
  BasicTensor clone() const;

  /// Runs reverse-mode differentiation from this scalar. Leaf gradients
  /// accumulate across calls until zero_grad().
  void backward() const;

  const NodePtr& node() const { return node_; }
  explicit BasicTensor(NodePtr node) : node_(std::move(node)) {}

 private:
  NodePtr node_;
};

using Tensor = BasicTensor<float>;
using Tensor64 = BasicTensor<double>;

/// Topologically ordered view of the graph that produced a tensor.
template <typename T>
class Graph {
 public:
  static Graph build(const BasicTensor<T>& root);

  // Inputs precede consumers; the root is last.
  const std::vector<detail::Node<T>*>& nodes() const { return order_; }
  void backward();

 private:
  std::vector<detail::Node<T>*> order_;
  detail::Node<T>* root_ = nullptr;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Converts values between precisions; result is a fresh leaf.
template <typename To, typename From>
BasicTensor<To> cast(const BasicTensor<From>& t) {
  std::vector<To> out(t.data().begin(), t.data().end());
  auto r = BasicTensor<To>(t.shape(), std::move(out));
  r.set_requires_grad(t.requires_grad());
  return r;
}

}  // namespace retisynth
