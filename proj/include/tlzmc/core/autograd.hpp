// Copyright (c) the TLZMC Authors.
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

#pragma once

#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

// Reverse-mode autodiff tape. Variables share nodes; each op appends a node
// whose backprop closure scatters the node's gradient into its parents.
// Inference code runs under NoGradGuard, which skips closure creation so the
// tape never grows.

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(grad_mode()) { grad_mode() = false; }
  ~NoGradGuard() { grad_mode() = prev; }
};

template <typename T>
class VarT {
 public:
  struct Node {
    TensorT<T> value;
    TensorT<T> grad;  // allocated lazily, same shape as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;  // may be empty (leaf / no-grad)

    TensorT<T>& grad_buf() {
      if (grad.shape != value.shape) grad = TensorT<T>(value.shape);
      return grad;
    }
  };

  VarT() = default;
  explicit VarT(TensorT<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  static VarT constant(TensorT<T> value) { return VarT(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const TensorT<T>& value() const { return node_->value; }
  // Vars are shared handles; in-place edits (optimizer steps, weight loads)
  // go through this deliberately-named accessor.
  TensorT<T>& mutable_value() const { return node_->value; }
  const TensorT<T>& grad() const { return node_->grad_buf(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  void zero_grad() const {
    if (node_) node_->grad = TensorT<T>();
  }
  std::shared_ptr<Node> node() const { return node_; }

  int rank() const { return node_->value.rank(); }
  int dim(int i) const { return node_->value.dim(i); }
  int64_t numel() const { return node_->value.numel(); }

  // Builds a result node. `parents` are the inputs whose gradients `back`
  // fills; `back` receives the finished result node. When grad mode is off or
  // no parent needs gradients, the closure is dropped and the node is a leaf.
  static VarT make(TensorT<T> value, std::vector<VarT> parents,
                   std::function<void(Node&)> back) {
    VarT out(std::move(value), false);
    bool need = grad_mode();
    if (need) {
      bool any = false;
      for (const auto& p : parents) any = any || p.requires_grad();
      need = any;
    }
    if (need) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(parents.size());
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backprop = std::move(back);
    }
    return out;
  }

  // Backpropagates from this (scalar or not; seed = ones) through the tape.
  void backward() const {
    auto& g = node_->grad_buf();
    for (auto& v : g.data) v = T(1);
    // Topological order via iterative DFS, then reverse sweep.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
    seen.insert(node_.get());
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        Node* p = n->parents[i++].get();
        if (p->requires_grad && !seen.count(p)) {
          seen.insert(p);
          stack.emplace_back(p, 0);
        }
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if ((*it)->backprop) (*it)->backprop(**it);
    }
  }

 private:
  std::shared_ptr<Node> node_;
};

using Var = VarT<float>;

// Adds `contrib` into the gradient buffer of `p` (no-op if p skips grads).
template <typename T>
inline void accumulate_grad(const VarT<T>& p, const TensorT<T>& contrib) {
  if (!p.requires_grad()) return;
  auto& g = p.node()->grad_buf();
  for (int64_t i = 0; i < contrib.numel(); ++i) g[i] += contrib[i];
}

}  // namespace tlzmc
