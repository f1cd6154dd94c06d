#pragma once

// Minimal tape-free reverse-mode autodiff. Every backward rule is written in
// terms of differentiable ops, so gradients can themselves be differentiated
// (create_graph = true), which the gradient penalty and second-order
// meta-learning rely on.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "fitdeblur/error.hpp"
#include "fitdeblur/tensor.hpp"

namespace fitdeblur::ad {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled) : previous_(grad_mode_flag()) { grad_mode_flag() = enabled; }
  ~GradModeGuard() { grad_mode_flag() = previous_; }
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

struct NoGradGuard : GradModeGuard {
  NoGradGuard() : GradModeGuard(false) {}
};

template <class T>
class Var;

template <class T>
using BackwardFn = std::function<std::vector<Var<T>>(const Var<T>&)>;

template <class T>
struct Node {
  Tensor<T> value;
  bool requires_grad = false;
  std::vector<Var<T>> parents;
  BackwardFn<T> backward;  // empty for leaves
};

template <class T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static Var parameter(Tensor<T> value) { return Var(std::move(value), true); }

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor<T>& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape; }
  std::size_t size() const { return node_->value.size(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  Node<T>* node() const { return node_.get(); }
  T item() const { return node_->value.data.at(0); }

  Var detach() const { return Var(node_->value, false); }

 private:
  std::shared_ptr<Node<T>> node_;

  template <class U>
  friend Var<U> record(Tensor<U> value, std::vector<Var<U>> parents, BackwardFn<U> backward);
};

// Wraps an op result; attaches the backward rule only when some input needs it.
template <class T>
Var<T> record(Tensor<T> value, std::vector<Var<T>> parents, BackwardFn<T> backward) {
  Var<T> out(std::move(value));
  if (!grad_mode_flag()) return out;
  const bool needs = std::any_of(parents.begin(), parents.end(), [](const Var<T>& p) { return p.requires_grad(); });
  if (!needs) return out;
  out.node_->requires_grad = true;
  out.node_->parents = std::move(parents);
  out.node_->backward = std::move(backward);
  return out;
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::shape, "add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bd[i];
  return record<T>(std::move(out), {a, b}, [](const Var<T>& g) { return std::vector<Var<T>>{g, g}; });
}

template <class T>
Var<T> zeros_like(const Var<T>& v) {
  return Var<T>(Tensor<T>(v.shape(), T(0)));
}

// Gradients of `output` with respect to `inputs`. A non-scalar output needs an
// explicit seed of the same shape. Inputs unreachable from the output receive
// zero gradients.
template <class T>
std::vector<Var<T>> grad(const Var<T>& output, const std::vector<Var<T>>& inputs, bool create_graph = false,
                         std::optional<Var<T>> seed = std::nullopt) {
  std::vector<Var<T>> result;
  result.reserve(inputs.size());
  if (!output.requires_grad()) {
    for (const auto& in : inputs) result.push_back(zeros_like(in));
    return result;
  }
  if (!seed) {
    require(output.size() == 1, ErrorKind::shape, "grad of a non-scalar output needs a seed");
    seed = Var<T>(Tensor<T>(output.shape(), T(1)));
  }
  require(seed->shape() == output.shape(), ErrorKind::shape, "grad seed shape mismatch");

  // Post-order DFS over nodes that carry gradients.
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(output.node(), 0);
  visited.insert(output.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].node();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  std::unordered_set<Node<T>*> wanted;
  for (const auto& in : inputs) wanted.insert(in.node());

  std::unordered_map<Node<T>*, Var<T>> grads;
  grads[output.node()] = *seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    auto found = grads.find(node);
    if (found == grads.end() || !node->backward) continue;
    Var<T> g = found->second;
    if (!wanted.count(node)) grads.erase(found);
    std::vector<Var<T>> parent_grads;
    {
      GradModeGuard mode(create_graph);
      parent_grads = node->backward(g);
    }
    for (std::size_t i = 0; i < node->parents.size(); ++i) {
      const Var<T>& parent = node->parents[i];
      if (!parent.requires_grad() || i >= parent_grads.size() || !parent_grads[i].defined()) continue;
      auto slot = grads.find(parent.node());
      if (slot == grads.end()) {
        grads.emplace(parent.node(), parent_grads[i]);
      } else {
        GradModeGuard mode(create_graph);
        slot->second = add(slot->second, parent_grads[i]);
      }
    }
  }

  for (const auto& in : inputs) {
    auto found = grads.find(in.node());
    result.push_back(found != grads.end() ? found->second : zeros_like(in));
  }
  return result;
}

}  // namespace fitdeblur::ad
