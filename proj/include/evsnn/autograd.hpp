#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "evsnn/tensor.hpp"

namespace evsnn {

struct Node;
using Var = std::shared_ptr<Node>;

// One vertex of the reverse-mode tape. `value` is written by the forward
// pass; `grad` is filled during backward and has the same shape as `value`.
// `backward_fn` reads this node's grad and accumulates into the parents'.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  bool grad_ready = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backward_fn;
  std::string name;

  Tensor& ensure_grad() {
    if (!grad_ready) {
      grad = Tensor::zeros(value.shape());
      grad_ready = true;
    }
    return grad;
  }
};

// Leaf with no gradient (inputs, frozen constants).
Var constant(Tensor value);

// Leaf that participates in optimization; `name` keys it in checkpoints.
Var parameter(Tensor value, std::string name);

// Interior node. requires_grad is inherited from the parents; the backward
// closure is dropped when nothing upstream needs gradients.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Runs reverse-mode accumulation from a scalar loss. Every node is visited
// exactly once, in reverse topological order of a deterministic DFS, so
// identical graphs produce bitwise-identical gradients. Leaves that do not
// lie on a path to the loss keep zero gradients.
void backward(const Var& loss);

void zero_grad(const std::vector<Var>& params);

// Elementwise y = f(x) with dy/dx = df(x). Generic escape hatch; tests use
// it to build smooth stand-ins for discontinuous ops.
Var map_unary(const Var& x, const std::function<double(double)>& f,
              const std::function<double(double)>& df);

}  // namespace evsnn
