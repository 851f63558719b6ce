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
#include <vector>

#include "tlzmc/core/ops.hpp"

namespace tlzmc::testing {

using DVar = VarT<double>;
using DTensor = TensorT<double>;

inline DTensor random_tensor(Rng& rng, std::vector<int> shape, double lo = -1.0,
                             double hi = 1.0) {
  DTensor t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Central finite-difference check of d(sum f(...))/d(input) for every element
// of every listed input, in double precision. `f` must rebuild the graph from
// the current input values on each call and return a scalar Var.
struct FdReport {
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
};

// `rel_floor` shields elements whose true gradient sits below the finite-
// difference resolution (central FD noise is ~|f| * 1e-16 / eps) from the
// relative comparison; errors below the floor are reported as absolute only.
inline FdReport fd_check(const std::vector<DVar>& inputs,
                         const std::function<DVar()>& f, double eps = 1e-6,
                         double rel_floor = 1e-8) {
  DVar loss = f();
  for (const auto& in : inputs) in.zero_grad();
  loss.zero_grad();
  loss.backward();
  std::vector<DTensor> analytic;
  analytic.reserve(inputs.size());
  for (const auto& in : inputs) analytic.push_back(in.grad());

  auto eval = [&]() {
    NoGradGuard ng;
    return f().value()[0];
  };

  FdReport rep;
  for (size_t k = 0; k < inputs.size(); ++k) {
    auto& t = inputs[k].mutable_value();
    for (int64_t i = 0; i < t.numel(); ++i) {
      double orig = t[i];
      t[i] = orig + eps;
      double up = eval();
      t[i] = orig - eps;
      double dn = eval();
      t[i] = orig;
      double fd = (up - dn) / (2.0 * eps);
      double an = analytic[k][i];
      double abs_err = std::abs(fd - an);
      double rel_err =
          abs_err / std::max({std::abs(fd), std::abs(an), rel_floor});
      rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err);
    }
  }
  return rep;
}

}  // namespace tlzmc::testing
