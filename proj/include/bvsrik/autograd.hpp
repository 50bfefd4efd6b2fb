#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "bvsrik/tensor.hpp"

namespace bvsrik {

/// One value in the computation graph. Leaves with requires_grad are
/// parameters; interior nodes carry a closure that pushes their gradient
/// into their parents.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient buffer, zero-initialized on first access.
  Tensor& grad_buffer();
};

/// Shared handle to a graph node. Copies alias the same node.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var parameter(Tensor value) { return Var(std::move(value), true); }
  static Var constant(Tensor value) { return Var(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and checkpoint loading; bypasses the graph.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  int dim(int axis) const { return node_->value.dim(axis); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  /// Accumulated gradient; zeros if nothing has been accumulated yet.
  const Tensor& grad() const { return node_->grad_buffer(); }
  void zero_grad() { node_->grad = Tensor(); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  friend Var make_result(Tensor value, std::vector<Var> parents,
                         std::function<void(Node&)> backward_fn);
  std::shared_ptr<Node> node_;
};

/// Reverse-mode sweep from a scalar root. Gradients accumulate into every
/// leaf that requires them; the interior graph is released afterwards.
void backward(const Var& root);

bool grad_enabled();

/// Disables graph recording for the lifetime of the guard.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Creates an interior node. The closure is dropped when no parent needs a
/// gradient or recording is disabled.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

}  // namespace bvsrik
