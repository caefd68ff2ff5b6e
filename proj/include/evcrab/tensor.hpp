#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace evcrab::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// One recorded operation. `backward` reads this node's gradient and accumulates
/// into the gradients of `inputs`; values of inputs stay alive through the shared
/// pointers, so closures never own copies of their operands.
template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

/// Handle to a node of the dynamic graph. Copies alias the same node.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  std::span<const T> data() const { return node_->value; }
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  /// Gradient accumulated by the last backward pass; empty when never reached.
  std::span<const T> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& shared() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// While alive, ops on this thread record no graph (inference and finite differences).
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

/// Builds an op result. When no input requires a gradient (or recording is off)
/// the inputs and closure are dropped.
template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      const char* op, std::function<void(Node<T>&)> backward);

/// Reverse-mode sweep from a scalar; each reachable node is visited exactly once
/// in reverse topological order. Throws ShapeError for a non-scalar loss.
template <class T>
void backward(const Tensor<T>& loss);

/// Topologically ordered nodes reachable from `root` that require gradients.
template <class T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root);

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

template <class T>
using GradientMap = std::map<std::string, std::vector<T>>;

/// Named trainable tensors of a model, in registration order.
template <class T>
class ParameterStore {
 public:
  /// Throws ConfigError on a duplicate name or a size mismatch.
  Tensor<T> add(const std::string& name, Shape shape, std::vector<T> init);
  Tensor<T> get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.contains(name); }

  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  /// Gradients of every parameter; unreachable parameters report zeros.
  GradientMap<T> gradients() const;
  /// Freezes or unfreezes every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool on);

 private:
  std::vector<Parameter<T>> params_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace evcrab::ad
