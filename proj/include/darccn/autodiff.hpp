#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "darccn/tensor.hpp"

namespace darccn::nn {

class Var;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first contribution during backward
  bool requires_grad = false;
  std::vector<Var> parents;
  std::function<void(Node&)> backprop;
};

// Reverse-mode tape handle. Ops build a define-by-run graph of Nodes; graphs
// are discarded by dropping the loss Var, so parameters (leaves) are the only
// long-lived nodes.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false) : n_(std::make_shared<Node>()) {
    n_->value = std::move(value);
    n_->requires_grad = requires_grad;
  }

  bool defined() const { return static_cast<bool>(n_); }
  Node* node() const { return n_.get(); }

  // Handle semantics: a const Var still refers to a mutable node, like a
  // const shared_ptr. Backward passes write grads through captured copies.
  Tensor& value() const { return n_->value; }
  Tensor& grad() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  void clear_grad() const {
    if (n_) n_->grad = Tensor();
  }

 private:
  std::shared_ptr<Node> n_;
};

// Graph recording switch; inference paths disable it to skip all bookkeeping.
inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGrad {
  bool prev;
  NoGrad() : prev(grad_enabled()) { grad_enabled() = false; }
  ~NoGrad() { grad_enabled() = prev; }
};

inline void accumulate(Tensor& dst, const Tensor& src, const std::vector<long>& dims) {
  if (dst.empty()) dst = Tensor(dims);
  for (long i = 0; i < src.numel(); ++i)
    dst[static_cast<std::size_t>(i)] += src[static_cast<std::size_t>(i)];
}

inline void accumulate_grad(const Var& v, const Tensor& contrib) {
  accumulate(v.node()->grad, contrib, v.value().dims());
}

// Wraps a computed value into the graph. When recording is off, or no parent
// can receive a gradient, the result is a detached constant.
inline Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  bool track = grad_enabled();
  if (track) {
    track = false;
    for (const auto& p : parents)
      if (p.requires_grad()) {
        track = true;
        break;
      }
  }
  Var out(std::move(value), track);
  if (track) {
    out.node()->parents = std::move(parents);
    out.node()->backprop = std::move(backprop);
  }
  return out;
}

// Reverse pass from a scalar loss. Gradients accumulate into leaf nodes (and
// any interior node still alive), so optimizers must clear them after a step.
inline void backward(const Var& loss) {
  if (!loss.defined()) throw std::invalid_argument("backward: undefined loss");
  if (loss.value().numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                loss.value().shape_str());
  if (!loss.requires_grad()) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  struct Item {
    Node* n;
    std::size_t next_parent;
  };
  std::vector<Item> stack;
  stack.push_back({loss.node(), 0});
  seen.insert(loss.node());
  while (!stack.empty()) {
    Item& top = stack.back();
    if (top.next_parent < top.n->parents.size()) {
      Node* p = top.n->parents[top.next_parent++].node();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(top.n);
      stack.pop_back();
    }
  }

  accumulate(loss.node()->grad, Tensor::scalar(1.0), loss.value().dims());
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace darccn::nn
