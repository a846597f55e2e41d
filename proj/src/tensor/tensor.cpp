#include "lit/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "lit/error.hpp"

namespace lit {

std::int64_t numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

template <class T>
std::span<T> Node<T>::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), T(0));
  return grad;
}

template struct Node<float>;
template struct Node<double>;

}  // namespace detail

template <class T>
Tensor<T>::Tensor() = default;

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values, bool requires_grad)
    : node_(std::make_shared<detail::Node<T>>()) {
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + to_string(shape));
  }
  if (lit::numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("shape " + to_string(shape) + " holds " +
                         std::to_string(lit::numel(shape)) + " elements but " +
                         std::to_string(values.size()) + " values were given");
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape) {
  return full(std::move(shape), T(0));
}

template <class T>
Tensor<T> Tensor<T>::ones(Shape shape) {
  return full(std::move(shape), T(1));
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
  auto n = lit::numel(shape);
  return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), value));
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value) {
  return Tensor(Shape{}, std::vector<T>{value});
}

template <class T>
Tensor<T> Tensor<T>::from_node(std::shared_ptr<detail::Node<T>> node) {
  Tensor t;
  t.node_ = std::move(node);
  return t;
}

template <class T>
const Shape& Tensor<T>::shape() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->shape;
}

template <class T>
std::int64_t Tensor<T>::dim(std::int64_t axis) const {
  const auto r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         to_string(shape()));
  }
  return shape()[static_cast<std::size_t>(axis)];
}

template <class T>
std::int64_t Tensor<T>::numel() const {
  return lit::numel(shape());
}

template <class T>
std::span<const T> Tensor<T>::data() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

template <class T>
std::span<T> Tensor<T>::mutable_data() {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->value;
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw ContractError("item() on a tensor of shape " + to_string(shape()));
  }
  return node_->value[0];
}

template <class T>
T Tensor<T>::at(std::initializer_list<std::int64_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) {
    throw DimensionError("index rank does not match shape " + to_string(s));
  }
  std::int64_t flat = 0;
  std::size_t d = 0;
  for (auto i : index) {
    if (i < 0 || i >= s[d]) throw DimensionError("index out of range for shape " + to_string(s));
    flat = flat * s[d] + i;
    ++d;
  }
  return node_->value[static_cast<std::size_t>(flat)];
}

template <class T>
bool Tensor<T>::requires_grad() const {
  return node_ && node_->requires_grad;
}

template <class T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  if (!node_) throw ContractError("use of an undefined tensor");
  if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = flag;
  return *this;
}

template <class T>
bool Tensor<T>::is_leaf() const {
  return node_ && node_->is_leaf();
}

template <class T>
const char* Tensor<T>::op_name() const {
  return node_ ? node_->op : "undefined";
}

template <class T>
bool Tensor<T>::has_grad() const {
  return node_ && !node_->grad.empty();
}

template <class T>
Tensor<T> Tensor<T>::grad() const {
  if (!has_grad()) return Tensor();
  return Tensor(node_->shape, node_->grad);
}

template <class T>
std::span<const T> Tensor<T>::grad_data() const {
  if (!node_) throw ContractError("use of an undefined tensor");
  return node_->grad;
}

template <class T>
void Tensor<T>::zero_grad() {
  if (node_) node_->grad.clear();
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(shape(), node_->value);
}

template <class T>
void Tensor<T>::backward() const {
  if (!node_) throw ContractError("backward() on an undefined tensor");
  if (numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(shape()));
  }
  Tape<T>::build(*this).run_backward();
}

template <class T>
Tape<T> Tape<T>::build(const Tensor<T>& root) {
  Tape tape;
  tape.root_ = root.node();
  if (!tape.root_ || !tape.root_->requires_grad) return tape;

  // Iterative post-order DFS so deep graphs cannot overflow the stack.
  std::unordered_set<detail::Node<T>*> visited;
  std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
  stack.emplace_back(tape.root_.get(), 0);
  visited.insert(tape.root_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      detail::Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && visited.insert(child).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      tape.nodes_.push_back(node);
      stack.pop_back();
    }
  }
  return tape;
}

template <class T>
void Tape<T>::run_backward() {
  if (nodes_.empty()) return;
  if (root_->is_leaf()) {
    root_->grad_buffer()[0] += T(1);
    return;
  }
  // Interior gradients are per-pass scratch; leaves accumulate across passes.
  for (auto* n : nodes_) {
    if (!n->is_leaf()) n->grad.clear();
  }
  auto seed = root_->grad_buffer();
  std::fill(seed.begin(), seed.end(), T(0));
  seed[0] = T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
  for (auto* n : nodes_) {
    if (!n->is_leaf() && n != root_.get()) n->grad.clear();
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace lit
