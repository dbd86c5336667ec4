#include "bisic/autograd.hpp"

#include <unordered_set>

namespace bisic {

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (grad.empty()) {
    grad = g;
    return;
  }
  if (grad.shape() != g.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match " +
                     shape_str(grad.shape()));
  }
  T* dst = grad.data();
  const T* src = g.data();
  for (int64_t i = 0; i < g.numel(); ++i) dst[i] += src[i];
}

template <typename T>
void Node<T>::accumulate(Tensor<T>&& g) {
  if (grad.empty()) {
    if (g.shape() != value.shape()) {
      throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value " +
                       shape_str(value.shape()));
    }
    grad = std::move(g);
    return;
  }
  accumulate(static_cast<const Tensor<T>&>(g));
}

template <typename T>
Var<T> Var<T>::constant(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  return Var(std::move(node));
}

template <typename T>
Var<T> Var<T>::parameter(Tensor<T> value) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

template <typename T>
void Var<T>::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a single-element output, got " + shape_str(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order. The order holds
  // owning pointers because consumed nodes release their inputs below.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<std::shared_ptr<Node<T>>, size_t>> stack;
  stack.emplace_back(node_, 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      const std::shared_ptr<Node<T>>& child = n->inputs[next++];
      if (child && child->requires_grad && visited.insert(child.get()).second) {
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad = Tensor<T>(node_->value.shape(), T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = it->get();
    if (!n->backward) continue;
    if (!n->grad.empty()) n->backward(*n);
    // Interior nodes are consumed by a backward pass.
    n->backward = nullptr;
    n->inputs.clear();
    n->grad = Tensor<T>();
  }
}

template <typename T>
Var<T> make_op(Tensor<T> value, std::vector<Var<T>> inputs,
               std::function<void(Node<T>&)> backward) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& in : inputs) any = any || (in.defined() && in.requires_grad());
    if (any) {
      node->requires_grad = true;
      node->inputs.reserve(inputs.size());
      for (auto& in : inputs) node->inputs.push_back(in.node());
      node->backward = std::move(backward);
    }
  }
  return Var<T>(std::move(node));
}

template struct Node<float>;
template struct Node<double>;
template class Var<float>;
template class Var<double>;
template Var<float> make_op(Tensor<float>, std::vector<Var<float>>,
                            std::function<void(Node<float>&)>);
template Var<double> make_op(Tensor<double>, std::vector<Var<double>>,
                             std::function<void(Node<double>&)>);

}  // namespace bisic
