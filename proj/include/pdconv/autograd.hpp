// Copyright 2026 The pdconv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Reverse-mode differentiation over Tensor values.
//
// A Var is a shared handle to a graph Node. Ops create a new Node holding the
// forward value, its parents and a backward rule that pushes the node's
// gradient into the parents. Leaves accumulate gradients across backward
// calls; interior gradients are reset at the start of every backward pass.

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pdconv/tensor.hpp"

namespace pdconv {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  bool is_leaf = true;
  std::string op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Gradient storage, zero-allocated on first use.
  Tensor<T>& grad_buffer() {
    if (!has_grad) {
      grad = Tensor<T>(value.shape());
      has_grad = true;
    }
    return grad;
  }

  void accumulate(const Tensor<T>& g) {
    Tensor<T>& dst = grad_buffer();
    require_same_shape(dst.shape(), g.shape(), "gradient accumulation");
    T* d = dst.ptr();
    const T* s = g.ptr();
    for (std::int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
  }
};

template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  /// Trainable leaf.
  static Var leaf(Tensor<T> value, bool requires_grad = true) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(value);
    node->requires_grad = requires_grad;
    return Var(std::move(node));
  }
  static Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  /// For in-place parameter updates between forward passes.
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_->requires_grad; }
  bool has_grad() const { return node_->has_grad; }
  /// Accumulated gradient; zeros if backward never reached this node.
  const Tensor<T>& grad() const { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_->has_grad) node_->grad.fill(T{0});
  }

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// While alive, ops on this thread record no graph.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Creates the output node of an op. The graph edge is recorded only if some
/// parent requires a gradient and grad mode is on.
template <typename T>
Var<T> make_op(std::string op, Tensor<T> value, std::vector<Var<T>> parents,
               std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = std::move(op);
  node->is_leaf = false;
  bool needs = false;
  for (const auto& p : parents) needs = needs || (p.defined() && p.requires_grad());
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.ptr());
    node->backward_fn = std::move(backward_fn);
  }
  return Var<T>(std::move(node));
}

/// Propagates d(root)/d(node) to every reachable node. Root must hold exactly
/// one element.
template <typename T>
void backward(const Var<T>& root);

/// Every node reachable from root, parents before children.
template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root);

}  // namespace pdconv
