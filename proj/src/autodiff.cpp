#include "earthgan/autodiff.hpp"

#include <unordered_map>
#include <unordered_set>
#include <utility>

#include "earthgan/ops.hpp"

namespace earthgan::ad {
namespace {

thread_local bool grad_enabled = true;

template <typename T>
std::vector<Node<T>*> topological_order(Node<T>* root) {
  // Iterative post-order DFS restricted to nodes that require gradients.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].node();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
std::unordered_map<Node<T>*, Var<T>> propagate(const Var<T>& root,
                                               bool create_graph) {
  if (!root.defined()) throw ValidationError("grad: undefined root");
  if (root.value().size() != 1) {
    throw ShapeError("grad: root must be a scalar, got shape " +
                     to_string(root.shape()));
  }
  std::unordered_map<Node<T>*, Var<T>> grads;
  if (!root.requires_grad()) return grads;

  GradModeGuard mode(create_graph);
  const auto order = topological_order(root.node());
  grads[root.node()] = Var<T>::constant(Tensor<T>(root.shape(), T(1)));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || node->parents.empty()) continue;
    const Var<T> upstream = found->second;
    std::vector<Var<T>> parent_grads = node->backward(upstream);
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Var<T>& parent = node->parents[i];
      if (!parent.requires_grad() || !parent_grads[i].defined()) continue;
      auto [slot, inserted] = grads.try_emplace(parent.node(), parent_grads[i]);
      if (!inserted) slot->second = ops::add(slot->second, parent_grads[i]);
    }
  }
  return grads;
}

}  // namespace

bool GradMode::enabled() { return grad_enabled; }
void GradMode::set(bool on) { grad_enabled = on; }

template <typename T>
Var<T> Var<T>::leaf(Tensor<T> value, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return Var<T>(std::move(node));
}

template <typename T>
Tensor<T>& Var<T>::mutable_value() {
  if (!is_leaf()) throw ValidationError("mutable_value: node is not a leaf");
  return node_->value;
}

template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<std::vector<Var<T>>(const Var<T>&)> backward,
                   const char* op) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Var<T>(std::move(node));
}

template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                         bool create_graph, bool allow_unused) {
  auto grads = propagate(root, create_graph);
  std::vector<Var<T>> out;
  out.reserve(inputs.size());
  for (const auto& input : inputs) {
    auto found = grads.find(input.node());
    if (found != grads.end()) {
      out.push_back(found->second);
    } else if (allow_unused) {
      out.push_back(Var<T>::constant(Tensor<T>(input.shape())));
    } else {
      throw ValidationError(
          "grad: input is not reachable from the root (shape " +
          to_string(input.shape()) + ")");
    }
  }
  return out;
}

template <typename T>
void backward(const Var<T>& root, GradAccumulation mode) {
  auto grads = propagate(root, false);
  for (auto& [node, g] : grads) {
    if (!node->parents.empty()) continue;
    if (mode == GradAccumulation::kAccumulate && node->grad) {
      Tensor<T>& acc = *node->grad;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g.value()[i];
    } else {
      node->grad = g.value();
    }
  }
}

template <typename T>
Var<T> input_gradient(const Var<T>& root, const Var<T>& wrt, bool retain) {
  return grad(root, {wrt}, retain, false).front();
}

#define EARTHGAN_INSTANTIATE(T)                                                \
  template class Var<T>;                                                       \
  template Var<T> make_result(Tensor<T>, std::vector<Var<T>>,                  \
                              std::function<std::vector<Var<T>>(const Var<T>&)>, \
                              const char*);                                    \
  template std::vector<Var<T>> grad(const Var<T>&, const std::vector<Var<T>>&, \
                                    bool, bool);                               \
  template void backward(const Var<T>&, GradAccumulation);                     \
  template Var<T> input_gradient(const Var<T>&, const Var<T>&, bool);

EARTHGAN_INSTANTIATE(float)
EARTHGAN_INSTANTIATE(double)

#undef EARTHGAN_INSTANTIATE

}  // namespace earthgan::ad
