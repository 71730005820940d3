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

#include "pdconv/autograd.hpp"

#include <unordered_set>

namespace pdconv {
namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <typename T>
std::vector<Node<T>*> topological_order(const Var<T>& root) {
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  // Iterative post-order DFS; deep graphs must not overflow the stack.
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

template <typename T>
void backward(const Var<T>& root) {
  if (!root.defined()) throw ContractError("backward() on an undefined Var");
  if (root.value().size() != 1) {
    throw ContractError("backward() requires a scalar root, got shape " + root.shape().str());
  }
  if (!root.requires_grad()) return;
  const std::vector<Node<T>*> order = topological_order(root);
  for (Node<T>* node : order) {
    if (!node->is_leaf && node->has_grad) node->grad.fill(T{0});
  }
  root.node()->grad_buffer()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* node = *it;
    if (node->backward_fn && node->has_grad) node->backward_fn(*node);
  }
}

template std::vector<Node<float>*> topological_order(const Var<float>&);
template std::vector<Node<double>*> topological_order(const Var<double>&);
template void backward(const Var<float>&);
template void backward(const Var<double>&);
template std::vector<Node<long double>*> topological_order(const Var<long double>&);
template void backward(const Var<long double>&);

}  // namespace pdconv
