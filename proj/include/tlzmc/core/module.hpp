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

#include <array>
#include <map>
#include <string>

#include "tlzmc/core/conv.hpp"
#include "tlzmc/core/ops.hpp"

namespace tlzmc {

// Named parameter registry. Iteration order is the (sorted) name order, which
// pins serialization, optimizer update order and snapshot comparisons.
template <typename T>
class ParamStoreT {
 public:
  VarT<T> add(const std::string& name, TensorT<T> init) {
    check(!params_.count(name), "duplicate parameter: " + name);
    VarT<T> v(std::move(init), true);
    params_.emplace(name, v);
    return v;
  }
  VarT<T> at(const std::string& name) const {
    auto it = params_.find(name);
    check(it != params_.end(), "unknown parameter: " + name);
    return it->second;
  }
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  const std::map<std::string, VarT<T>>& all() const { return params_; }

  // Enables/disables gradient tracking for every parameter under `prefix`.
  // Frozen parameters drop out of the tape entirely.
  void set_trainable(const std::string& prefix, bool on) {
    for (auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) v.node()->requires_grad = on;
  }
  void set_all_trainable(bool on) { set_trainable("", on); }

  void zero_grads() {
    for (auto& [name, v] : params_) v.zero_grad();
  }

  std::map<std::string, TensorT<T>> snapshot(const std::string& prefix) const {
    std::map<std::string, TensorT<T>> out;
    for (const auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) out.emplace(name, v.value());
    return out;
  }

  int64_t count_params(const std::string& prefix) const {
    int64_t n = 0;
    for (const auto& [name, v] : params_)
      if (name.rfind(prefix, 0) == 0) n += v.numel();
    return n;
  }

 private:
  std::map<std::string, VarT<T>> params_;
};

using ParamStore = ParamStoreT<float>;

template <typename T>
TensorT<T> he_normal(Rng& rng, std::vector<int> shape, int fan_in) {
  TensorT<T> t(std::move(shape));
  double std = std::sqrt(2.0 / fan_in);
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * std);
  return t;
}

enum class Init { kHe, kZero };

// Convolution layer (optionally transposed) with optional frame-type
// adaptation: a per-channel (scale, bias) pair selected by the frame type
// (0 = reference B, 1 = non-reference B), applied to the conv output.
template <typename T>
class Conv2dT {
 public:
  Conv2dT() = default;
  Conv2dT(ParamStoreT<T>& ps, Rng& rng, const std::string& name, int cin,
          int cout, int k, int stride, bool transpose, Init init, bool fa)
      : cin_(cin), cout_(cout), k_(k), stride_(stride), transpose_(transpose),
        fa_(fa) {
    std::vector<int> wshape = transpose ? std::vector<int>{cin, cout, k, k}
                                        : std::vector<int>{cout, cin, k, k};
    TensorT<T> w = init == Init::kZero ? TensorT<T>(wshape)
                                       : he_normal<T>(rng, wshape, cin * k * k);
    w_ = ps.add(name + ".w", std::move(w));
    b_ = ps.add(name + ".b", TensorT<T>({cout}));
    if (fa) {
      for (int i = 0; i < 2; ++i) {
        fa_s_[i] = ps.add(name + ".fa_s" + std::to_string(i),
                          TensorT<T>({cout}, T(1)));
        fa_b_[i] = ps.add(name + ".fa_b" + std::to_string(i), TensorT<T>({cout}));
      }
    }
  }

  VarT<T> operator()(const VarT<T>& x, int fa_idx = -1) const {
    int p = (k_ - 1) / 2;
    VarT<T> y = transpose_
                    ? conv_transpose2d(x, w_, b_, stride_, p, stride_ - 1)
                    : conv2d(x, w_, b_, stride_, p);
    if (fa_ && fa_idx >= 0) y = channel_affine(y, fa_s_[fa_idx], fa_b_[fa_idx]);
    return y;
  }

  void out_size(int h, int w, int& oh, int& ow) const {
    int p = (k_ - 1) / 2;
    if (transpose_) {
      oh = tconv_out_size(h, k_, stride_, p, stride_ - 1);
      ow = tconv_out_size(w, k_, stride_, p, stride_ - 1);
    } else {
      oh = conv_out_size(h, k_, stride_, p);
      ow = conv_out_size(w, k_, stride_, p);
    }
  }

  // Multiply-accumulates for one application at input size (h, w); transposed
  // convolutions are counted on their output grid.
  int64_t macs(int h, int w) const {
    int oh, ow;
    out_size(h, w, oh, ow);
    return static_cast<int64_t>(oh) * ow * cout_ * cin_ * k_ * k_;
  }

  int64_t param_count() const {
    int64_t n = static_cast<int64_t>(cin_) * cout_ * k_ * k_ + cout_;
    if (fa_) n += 4 * static_cast<int64_t>(cout_);
    return n;
  }

  int cin() const { return cin_; }
  int cout() const { return cout_; }

 private:
  VarT<T> w_, b_;
  std::array<VarT<T>, 2> fa_s_, fa_b_;
  int cin_ = 0, cout_ = 0, k_ = 0, stride_ = 1;
  bool transpose_ = false, fa_ = false;
};

// Pre-activation residual block: x + conv(lrelu(conv(x))), 3x3, stride 1.
template <typename T>
class ResBlockT {
 public:
  ResBlockT() = default;
  ResBlockT(ParamStoreT<T>& ps, Rng& rng, const std::string& name, int ch,
            bool fa)
      : c1_(ps, rng, name + ".c1", ch, ch, 3, 1, false, Init::kHe, fa),
        c2_(ps, rng, name + ".c2", ch, ch, 3, 1, false, Init::kHe, fa) {}

  VarT<T> operator()(const VarT<T>& x, int fa_idx = -1) const {
    return add(x, c2_(leaky_relu(c1_(x, fa_idx), T(0.2)), fa_idx));
  }

  int64_t macs(int h, int w) const { return c1_.macs(h, w) + c2_.macs(h, w); }
  int64_t param_count() const { return c1_.param_count() + c2_.param_count(); }

 private:
  Conv2dT<T> c1_, c2_;
};

}  // namespace tlzmc
