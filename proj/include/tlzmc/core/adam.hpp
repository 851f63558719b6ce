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

#include "tlzmc/core/module.hpp"

namespace tlzmc {

// ADAM over the trainable subset of a parameter store. Parameters whose
// gradient tracking is disabled are skipped, so freezing a module both stops
// its gradients and its updates.
template <typename T>
class AdamT {
 public:
  explicit AdamT(ParamStoreT<T>& ps, double lr, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : ps_(ps), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, t_);
    double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& [name, v] : ps_.all()) {
      if (!v.requires_grad()) continue;
      auto& state = state_[name];
      auto& val = v.mutable_value();
      const auto& g = v.grad();
      if (state.m.numel() != val.numel()) {
        state.m = TensorT<T>(val.shape);
        state.v = TensorT<T>(val.shape);
      }
      for (int64_t i = 0; i < val.numel(); ++i) {
        double gi = g[i];
        double m = beta1_ * state.m[i] + (1.0 - beta1_) * gi;
        double vv = beta2_ * state.v[i] + (1.0 - beta2_) * gi * gi;
        state.m[i] = static_cast<T>(m);
        state.v[i] = static_cast<T>(vv);
        val[i] -= static_cast<T>(lr_ * (m / bc1) /
                                 (std::sqrt(vv / bc2) + eps_));
      }
    }
  }

 private:
  struct State {
    TensorT<T> m, v;
  };
  ParamStoreT<T>& ps_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, State> state_;
};

using Adam = AdamT<float>;

}  // namespace tlzmc
