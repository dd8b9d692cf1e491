#include "evsnn/autograd.hpp"

#include <unordered_set>

#include "evsnn/errors.hpp"

namespace evsnn {

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var parameter(Tensor value, std::string name) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->name = std::move(name);
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  for (const auto& p : parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& loss) {
  if (!loss) throw ValidationError("backward: null loss node");
  if (loss->value.numel() != 1) {
    throw ValidationError("backward requires a scalar loss, got shape " + shape_str(loss->value.shape()));
  }
  if (!loss->requires_grad) {
    throw StateError("backward called on a graph with no differentiable leaves (no forward recorded)");
  }

  // Iterative post-order DFS; parents visited in index order, so the
  // resulting topological order is a pure function of graph structure.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.get(), 0});
  visited.insert(loss.get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    if (top.next_parent < top.node->parents.size()) {
      Node* p = top.node->parents[top.next_parent++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(top.node);
      stack.pop_back();
    }
  }

  loss->ensure_grad()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) {
      n->ensure_grad();
      n->backward_fn(*n);
    }
  }
}

void zero_grad(const std::vector<Var>& params) {
  for (const auto& p : params) {
    p->grad = Tensor::zeros(p->value.shape());
    p->grad_ready = true;
  }
}

Var map_unary(const Var& x, const std::function<double(double)>& f,
              const std::function<double(double)>& df) {
  Tensor out(x->value.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = f(x->value[i]);
  return make_node(std::move(out), {x}, [x, df](Node& self) {
    Tensor& gx = x->ensure_grad();
    for (int64_t i = 0; i < self.grad.numel(); ++i) {
      gx[i] += self.grad[i] * df(x->value[i]);
    }
  });
}

}  // namespace evsnn
