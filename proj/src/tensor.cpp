#include "evcrab/tensor.hpp"

#include <unordered_set>

#include "evcrab/errors.hpp"

namespace evcrab::ad {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <class T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (ad::numel(shape) != values.size()) {
    throw ShapeError("tensor data length " + std::to_string(values.size()) +
                     " does not match shape " + to_string(shape));
  }
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

template <class T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = ad::numel(shape);
  return from(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <class T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape()));
  return node_->value[0];
}

template <class T>
Tensor<T> make_result(Shape shape, std::vector<T> value, std::vector<Tensor<T>> inputs,
                      const char* op, std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  if (needs) {
    n->requires_grad = true;
    n->inputs.reserve(inputs.size());
    for (auto& in : inputs) n->inputs.push_back(in.shared());
    n->backward = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

template <class T>
std::vector<Node<T>*> topological_order(const Tensor<T>& root) {
  std::vector<Node<T>*> order;
  if (!root.defined() || !root.requires_grad()) return order;
  std::unordered_set<Node<T>*> seen;
  // iterative post-order DFS; graphs can be thousands of nodes deep
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node<T>* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw ShapeError("backward needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  auto order = topological_order(loss);
  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

template <class T>
Tensor<T> ParameterStore<T>::add(const std::string& name, Shape shape, std::vector<T> init) {
  if (index_.contains(name)) throw ConfigError("duplicate parameter name \"" + name + "\"");
  auto t = Tensor<T>::from(std::move(shape), std::move(init), true);
  index_[name] = params_.size();
  params_.push_back({name, t});
  return t;
}

template <class T>
Tensor<T> ParameterStore<T>::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter \"" + name + "\"");
  return params_[it->second].tensor;
}

template <class T>
std::size_t ParameterStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <class T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <class T>
GradientMap<T> ParameterStore<T>::gradients() const {
  GradientMap<T> out;
  for (const auto& p : params_) {
    auto g = p.tensor.grad();
    out[p.name] = g.empty() ? std::vector<T>(p.tensor.numel(), T(0))
                            : std::vector<T>(g.begin(), g.end());
  }
  return out;
}

template <class T>
void ParameterStore<T>::set_trainable(const std::string& prefix, bool on) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) p.tensor.set_requires_grad(on);
  }
}

#define EVCRAB_INSTANTIATE(T)                                                                  \
  template class Tensor<T>;                                                                    \
  template class ParameterStore<T>;                                                            \
  template Tensor<T> make_result<T>(Shape, std::vector<T>, std::vector<Tensor<T>>,             \
                                    const char*, std::function<void(Node<T>&)>);               \
  template std::vector<Node<T>*> topological_order<T>(const Tensor<T>&);                       \
  template void backward<T>(const Tensor<T>&);

EVCRAB_INSTANTIATE(float)
EVCRAB_INSTANTIATE(double)

#undef EVCRAB_INSTANTIATE

}  // namespace evcrab::ad
