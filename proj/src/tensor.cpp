#include "retisynth/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace retisynth {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
BasicTensor<T>::BasicTensor() : node_(std::make_shared<detail::Node<T>>()) {}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : node_(std::make_shared<detail::Node<T>>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  node_->value.assign(shape_numel(shape), fill);
  node_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : node_(std::make_shared<detail::Node<T>>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  node_->value.assign(values.begin(), values.end());
  node_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, Buffer<T>&& values) : node_(std::make_shared<detail::Node<T>>()) {
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != values.size())
    throw DimensionError("shape " + shape_str(shape) + " holds " + std::to_string(shape_numel(shape)) +
                         " values, got " + std::to_string(values.size()));
  node_->value = std::move(values);
  node_->shape = std::move(shape);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::parameter(Shape shape, std::vector<T> values) {
  BasicTensor t(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::scalar(T value) {
  return BasicTensor(Shape{1}, std::vector<T>{value});
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= rank())
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape()));
  return node_->shape[axis];
}

template <typename T>
T BasicTensor<T>::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
T BasicTensor<T>::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch for shape " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw DimensionError("index out of range for shape " + shape_str(shape()));
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->value[flat];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::detach() const {
  return BasicTensor(node_->shape, Buffer<T>(node_->value));
}

template <typename T>
BasicTensor<T> BasicTensor<T>::clone() const {
  BasicTensor t(node_->shape, Buffer<T>(node_->value));
  t.node_->requires_grad = node_->requires_grad;
  return t;
}

template <typename T>
void BasicTensor<T>::backward() const {
  if (numel() != 1)
    throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
  Graph<T>::build(*this).backward();
}

template <typename T>
Graph<T> Graph<T>::build(const BasicTensor<T>& root) {
  Graph g;
  g.root_ = root.node().get();
  // Iterative post-order DFS; each node is emitted exactly once, after all
  // of its inputs.
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(g.root_, 0);
  seen.insert(g.root_);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      g.order_.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

template <typename T>
void Graph<T>::backward() {
  if (root_ == nullptr || root_->value.size() != 1) throw ContractError("backward() requires a scalar loss");
  if (!root_->requires_grad) return;
  for (auto* n : order_)
    if (!n->is_leaf()) n->grad.assign(n->value.size(), T(0));
  root_->grad_buffer()[0] += T(1);
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->is_leaf() || !n->backward) continue;
    n->backward(*n);
  }
  // Intermediate grads are scratch; dropping them keeps memory flat.
  for (auto* n : order_)
    if (!n->is_leaf()) Buffer<T>().swap(n->grad);
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Graph<float>;
template class Graph<double>;

}  // namespace retisynth
