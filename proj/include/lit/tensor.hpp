#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lit {

using Shape = std::vector<std::int64_t>;

std::int64_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

namespace detail {

// One vertex of the define-by-run graph. A node owns its value; the gradient
// buffer is allocated lazily on first accumulation.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this node's grad and accumulates into inputs' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::span<T> grad_buffer();
};

}  // namespace detail

// Gradient recording is on by default and thread-local.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Dense row-major array with reverse-mode autodiff. Copies share the
// underlying node, so a Tensor behaves like a handle to an immutable value;
// only leaves (parameters) are mutated, by optimizers and loaders.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor();
  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  static Tensor zeros(Shape shape);
  static Tensor ones(Shape shape);
  static Tensor full(Shape shape, T value);
  static Tensor scalar(T value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t rank() const { return static_cast<std::int64_t>(shape().size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::int64_t numel() const;

  std::span<const T> data() const;
  // Direct write access; only meaningful for leaves.
  std::span<T> mutable_data();
  T item() const;
  T operator[](std::int64_t flat_index) const { return data()[flat_index]; }
  T at(std::initializer_list<std::int64_t> index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool is_leaf() const;
  const char* op_name() const;

  bool has_grad() const;
  Tensor grad() const;
  std::span<const T> grad_data() const;
  void zero_grad();

  // Value copy detached from any graph.
  Tensor detach() const;

  // Reverse pass from a scalar; accumulates into requires_grad leaves.
  void backward() const;

  const std::shared_ptr<detail::Node<T>>& node() const { return node_; }
  static Tensor from_node(std::shared_ptr<detail::Node<T>> node);

 private:
  std::shared_ptr<detail::Node<T>> node_;
};

// Topologically ordered record of the nodes reachable from a root that need
// gradients. Built on demand from the graph recorded during the forward pass.
template <class T>
class Tape {
 public:
  static Tape build(const Tensor<T>& root);

  const std::vector<detail::Node<T>*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and visits every node once in reverse order.
  void run_backward();

 private:
  std::shared_ptr<detail::Node<T>> root_;
  std::vector<detail::Node<T>*> nodes_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace lit
