#pragma once

// Reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Every backward rule is written in
// terms of differentiable ops, so running grad() with create_graph = true
// yields gradients that are themselves graph nodes; differentiating those a
// second time is how the gradient penalty reaches the critic parameters.

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "earthgan/tensor.hpp"

namespace earthgan::ad {

template <typename T>
struct Node;

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  // Leaf owning `value`; participates in differentiation when requires_grad.
  static Var leaf(Tensor<T> value, bool requires_grad = true);
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  T item() const { return node_->value.item(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool is_leaf() const { return node_ && node_->parents.empty(); }
  Node<T>* node() const { return node_.get(); }

  // Gradient stored by backward(); null before the first pass.
  const Tensor<T>* grad() const {
    return node_->grad ? &*node_->grad : nullptr;
  }
  void clear_grad() { node_->grad.reset(); }

  // In-place access for optimizers. Only valid on leaves.
  Tensor<T>& mutable_value();

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  // Maps the upstream gradient onto one gradient per parent. An undefined Var
  // means "no contribution".
  std::function<std::vector<Var<T>>(const Var<T>&)> backward;
  std::optional<Tensor<T>> grad;
  const char* op = "leaf";
};

// Thread-local switch controlling whether ops record graph edges.
class GradMode {
 public:
  static bool enabled();
  static void set(bool on);
};

class GradModeGuard {
 public:
  explicit GradModeGuard(bool on) : previous_(GradMode::enabled()) {
    GradMode::set(on);
  }
  ~GradModeGuard() { GradMode::set(previous_); }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

// Creates a result node. Parents are recorded only when grad mode is on and at
// least one parent requires a gradient.
template <typename T>
Var<T> make_result(Tensor<T> value, std::vector<Var<T>> parents,
                   std::function<std::vector<Var<T>>(const Var<T>&)> backward,
                   const char* op);

// Gradients of scalar `root` with respect to each of `inputs`. When
// create_graph is set the returned Vars are differentiable. Unreachable inputs
// are an error unless allow_unused, in which case their gradient is zero.
template <typename T>
std::vector<Var<T>> grad(const Var<T>& root, const std::vector<Var<T>>& inputs,
                         bool create_graph = false, bool allow_unused = false);

enum class GradAccumulation { kReset, kAccumulate };

// Populates Var::grad() on every reachable leaf that requires a gradient.
// By default each call replaces previous gradients.
template <typename T>
void backward(const Var<T>& root,
              GradAccumulation mode = GradAccumulation::kReset);

// Gradient of `root` with respect to the leaf `wrt`. With retain set the
// result stays attached to the graph for a second differentiation.
template <typename T>
Var<T> input_gradient(const Var<T>& root, const Var<T>& wrt, bool retain);

}  // namespace earthgan::ad
