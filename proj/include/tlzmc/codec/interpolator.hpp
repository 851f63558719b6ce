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

#include "tlzmc/core/module.hpp"

namespace tlzmc {

// Midpoint frame interpolator: estimates backward motion fields from both
// decoded references to the (absent) in-between frame and fuses the two
// warped references. It transmits nothing, so the decoder reruns it on the
// same reference frames and reproduces the prediction bit-exactly — the
// anchor for every downstream decision that must match across encoder and
// decoder (conditioning frames, skip masks).

template <typename T>
struct InterpResultT {
  VarT<T> interpolated;         // x̄: fused midpoint prediction, in [0, 1]
  VarT<T> flow_prev, flow_next;  // (2, H, W) displacements, px, (dx, dy)
};

namespace detail {

// One pyramid-level estimator: three 3x3 convolutions and a zero-initialized
// head, so an untrained level predicts a zero flow update.
template <typename T>
struct FlowBlockT {
  FlowBlockT() = default;
  FlowBlockT(ParamStoreT<T>& ps, Rng& rng, const std::string& name, int in_c,
             int mid, int out_c)
      : c0(ps, rng, name + ".c0", in_c, mid, 3, 1, false, Init::kHe, false),
        c1(ps, rng, name + ".c1", mid, mid, 3, 1, false, Init::kHe, false),
        c2(ps, rng, name + ".c2", mid, mid, 3, 1, false, Init::kHe, false),
        head(ps, rng, name + ".head", mid, out_c, 3, 1, false, Init::kZero,
             false) {}

  VarT<T> operator()(const VarT<T>& in) const {
    VarT<T> h = leaky_relu(c0(in), T(0.2));
    h = leaky_relu(c1(h), T(0.2));
    h = leaky_relu(c2(h), T(0.2));
    return head(h);
  }

  int64_t macs(int h, int w) const {
    return c0.macs(h, w) + c1.macs(h, w) + c2.macs(h, w) + head.macs(h, w);
  }

  Conv2dT<T> c0, c1, c2, head;
};

}  // namespace detail

// Coarse-to-fine flow estimation over a 3-level pyramid (full, 1/2, 1/4
// resolution), each level refining the upsampled coarser flow pair from the
// references warped by it, followed by a fusion block that blends the two
// warped references through a soft occlusion mask plus a free residual.
//
// With untrained (zero) heads the flows are identically zero and the output
// is the plain average of the two references.
template <typename T>
class InterpolatorT {
 public:
  static constexpr int kLevels = 3;

  InterpolatorT() = default;
  InterpolatorT(ParamStoreT<T>& ps, Rng& rng, const std::string& prefix,
                int width) {
    for (int l = 0; l < kLevels; ++l)
      levels_[l] = detail::FlowBlockT<T>(
          ps, rng, prefix + ".l" + std::to_string(l), 10, width, 4);
    fuse_ = detail::FlowBlockT<T>(ps, rng, prefix + ".fuse", 10, width, 4);
  }

  // refs are (3, H, W) frames with H, W divisible by 4.
  InterpResultT<T> operator()(const VarT<T>& ref_prev,
                              const VarT<T>& ref_next) const {
    check(ref_prev.rank() == 3 && ref_prev.dim(0) == 3 &&
              ref_prev.value().same_shape(ref_next.value()),
          "interpolate: reference shape mismatch");
    int h = ref_prev.dim(1), w = ref_prev.dim(2);
    check(h % 4 == 0 && w % 4 == 0, "interpolate: size not divisible by 4");

    std::array<VarT<T>, kLevels> pp, np;
    pp[0] = ref_prev;
    np[0] = ref_next;
    for (int l = 1; l < kLevels; ++l) {
      pp[l] = avg_pool2d(pp[l - 1], 2);
      np[l] = avg_pool2d(np[l - 1], 2);
    }

    // flow packs both fields as (4, h_l, w_l): channels 0-1 toward ref_prev,
    // 2-3 toward ref_next. Displacements double when moving up one level.
    VarT<T> flow = VarT<T>::constant(
        TensorT<T>({4, h >> (kLevels - 1), w >> (kLevels - 1)}));
    for (int l = kLevels - 1; l >= 0; --l) {
      if (l < kLevels - 1) flow = mul_scalar(upsample_bilinear2(flow), T(2));
      VarT<T> wp = warp_bilinear(pp[l], slice_c(flow, 0, 2));
      VarT<T> wn = warp_bilinear(np[l], slice_c(flow, 2, 4));
      flow = add(flow, levels_[l](concat_c<T>({wp, wn, flow})));
    }

    InterpResultT<T> out;
    out.flow_prev = slice_c(flow, 0, 2);
    out.flow_next = slice_c(flow, 2, 4);
    VarT<T> wp = warp_bilinear(ref_prev, out.flow_prev);
    VarT<T> wn = warp_bilinear(ref_next, out.flow_next);
    VarT<T> head = fuse_(concat_c<T>({wp, wn, flow}));
    VarT<T> m1 = sigmoid_v(slice_c(head, 0, 1));
    VarT<T> m = concat_c<T>({m1, m1, m1});
    VarT<T> blend = add(mul(m, wp), mul(add_scalar(neg(m), T(1)), wn));
    out.interpolated =
        clamp_v(add(blend, slice_c(head, 1, 4)), T(0), T(1));
    return out;
  }

  int64_t macs(int h, int w) const {
    int64_t total = fuse_.macs(h, w);
    for (int l = 0; l < kLevels; ++l)
      total += levels_[l].macs(h >> l, w >> l);
    return total;
  }

 private:
  std::array<detail::FlowBlockT<T>, kLevels> levels_;
  detail::FlowBlockT<T> fuse_;
};

using InterpResult = InterpResultT<float>;
using Interpolator = InterpolatorT<float>;

}  // namespace tlzmc
