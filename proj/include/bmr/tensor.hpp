#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bmr {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& s);
std::size_t numel(const Shape& s);

/// Operand shapes do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input outside the domain of an op (log of a non-positive value, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first touched by backward
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::span<double> grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles; a cheap handle onto a shared graph node.
///
/// Copies alias the same node. Ops never mutate their inputs; the only
/// in-place writers are the optimizer and parameter initialisation, which go
/// through `mutable_data()`.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double item() const;
  double operator[](std::size_t i) const { return node_->data[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on);

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy of the values into a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& handle() const { return node_; }
  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  /// Builds a (possibly recorded) op result. Parents are attached only when
  /// recording is enabled and some parent requires a gradient.
  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Recorded operations reachable from a root, in topological order.
class Tape {
 public:
  static Tape record(const Tensor& root);

  const std::vector<detail::Node*>& nodes() const { return order_; }

  /// Seeds d(root)/d(root) = 1 and runs every node's backward once, in
  /// reverse topological order. Leaf gradients accumulate across calls;
  /// intermediate gradients are reset first.
  void run(const Tensor& root) const;

 private:
  std::vector<detail::Node*> order_;
};

/// Backpropagates from a scalar loss.
void backward(const Tensor& loss);

/// While alive, ops on this thread do not record parents (inference mode).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_recording_enabled();

}  // namespace bmr
