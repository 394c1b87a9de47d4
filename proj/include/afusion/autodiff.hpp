#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "afusion/tensor.hpp"

namespace afusion {

// Reverse-mode engine. Every operation appends a node to an implicit tape:
// the DAG of shared_ptr-linked nodes, created in forward order (inputs always
// precede outputs, so the link order is already topological). backward() walks
// the grad-requiring subgraph once in reverse.
//
// Adjoints are pass-local: each backward() starts them from zero, so repeated
// backward() calls on the same graph accumulate leaf .grad exactly additively
// (two calls yield exactly 2x the gradient).
template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;     // leaf accumulator, allocated on first backward
  Tensor<S> adjoint;  // pass-local, released after each backward
  bool requires_grad = false;
  bool leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node<S>>> inputs;
  std::function<void(Node<S>&)> backward_fn;  // pushes adjoint into inputs
};

template <typename S>
using NodePtr = std::shared_ptr<Node<S>>;

struct BackwardStats {
  std::size_t nodes_visited = 0;
};

template <typename S>
class Var {
 public:
  Var() = default;

  static Var leaf(Tensor<S> value, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    Var v;
    v.n_ = std::move(n);
    return v;
  }

  static Var constant(Tensor<S> value) { return leaf(std::move(value), false); }

  static Var op(const char* name, Tensor<S> value, std::vector<Var> ins,
                std::function<void(Node<S>&)> backward_fn) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(value);
    n->leaf = false;
    n->op = name;
    n->inputs.reserve(ins.size());
    for (auto& in : ins) {
      n->requires_grad = n->requires_grad || in.requires_grad();
      n->inputs.push_back(in.n_);
    }
    if (n->requires_grad) n->backward_fn = std::move(backward_fn);
    Var v;
    v.n_ = std::move(n);
    return v;
  }

  bool defined() const { return n_ != nullptr; }
  const Tensor<S>& value() const { return n_->value; }
  Tensor<S>& mutable_value() { return n_->value; }
  const Shape& shape() const { return n_->value.shape(); }
  bool requires_grad() const { return n_ && n_->requires_grad; }

  void set_requires_grad(bool rg) {
    if (!n_->leaf)
      throw ValidationError("set_requires_grad: only leaf tensors can be toggled");
    n_->requires_grad = rg;
  }

  // Leaf gradient accumulator (allocated zero on demand).
  Tensor<S>& grad() {
    if (!n_->grad.defined()) n_->grad = Tensor<S>::zeros(n_->value.shape());
    return n_->grad;
  }
  bool has_grad() const { return n_->grad.defined(); }

  void zero_grad() {
    if (n_->grad.defined()) n_->grad.set_zero();
  }

  NodePtr<S> node() const { return n_; }

  // Reverse sweep from a scalar output. Each reachable grad-requiring node is
  // visited exactly once; returns the visit count for inspection.
  BackwardStats backward() const {
    if (!n_) throw ValidationError("backward: undefined variable");
    if (n_->value.numel() != 1)
      throw ValidationError("backward: output must be scalar, got " +
                            n_->value.shape_string());
    BackwardStats stats;
    if (!n_->requires_grad) return stats;

    std::vector<Node<S>*> topo;
    std::unordered_set<Node<S>*> seen;
    std::vector<std::pair<Node<S>*, std::size_t>> stack;
    seen.insert(n_.get());
    stack.emplace_back(n_.get(), 0);
    while (!stack.empty()) {
      auto& [u, i] = stack.back();
      if (i < u->inputs.size()) {
        Node<S>* c = u->inputs[i++].get();
        if (c->requires_grad && !seen.count(c)) {
          seen.insert(c);
          stack.emplace_back(c, 0);
        }
      } else {
        topo.push_back(u);
        stack.pop_back();
      }
    }

    for (Node<S>* u : topo) u->adjoint = Tensor<S>::zeros(u->value.shape());
    n_->adjoint.data()[0] = S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
      Node<S>* u = *it;
      if (u->backward_fn) u->backward_fn(*u);
      if (u->leaf) {
        if (!u->grad.defined()) u->grad = Tensor<S>::zeros(u->value.shape());
        u->grad.vec() += u->adjoint.vec();
      }
      ++stats.nodes_visited;
    }
    for (Node<S>* u : topo) u->adjoint = Tensor<S>();
    return stats;
  }

 private:
  NodePtr<S> n_;
};

// Accumulates src into the adjoint of `in` if it participates in the pass.
template <typename S>
inline void accumulate_adjoint(const NodePtr<S>& in, const Tensor<S>& src) {
  if (!in->requires_grad) return;
  in->adjoint.vec() += src.vec();
}

using VarF = Var<float>;
using VarD = Var<double>;

}  // namespace afusion
