#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "lnet/tensor.hpp"

namespace lnet {

struct Node;
using Var = std::shared_ptr<Node>;

/// A value in a dynamically recorded computation. Nodes that do not require a
/// gradient keep neither their inputs nor a backward closure, so inference
/// builds no graph.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<Var> inputs;
  /// Reads this node's grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward_fn;

  /// Adds `g` into this node's gradient, allocating it on first use.
  void accumulate(const Tensor& g);
  Tensor& grad_buffer();
};

Var constant(Tensor value);
Var variable(Tensor value, bool requires_grad = true);

/// Creates an op node. When no input requires a gradient the result is a
/// constant and `fn` is dropped.
Var make_node(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> fn);

/// Reverse-mode sweep from `root`, seeded with `seed` (ones when omitted).
void backward(const Var& root);
void backward(const Var& root, const Tensor& seed);

}  // namespace lnet
