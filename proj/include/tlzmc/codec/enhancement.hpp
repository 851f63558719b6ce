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

#include "tlzmc/codec/canf.hpp"

namespace tlzmc {

// The enhancement layer fuses the super-resolved base reconstruction with the
// two motion-warped references into the conditioning frame x', derives a
// binary per-sample skip mask from decoder-available signals only (motion
// fields, x', and the hyperprior parameters — the mask is never transmitted),
// and codes the full-resolution frame with the frame-type-adaptive compressor
// under that mask.

template <typename T>
struct MergeOutT {
  VarT<T> map;    // (3, H, W) per-pixel convex weights over the three inputs
  VarT<T> fused;  // weighted sum before refinement
  VarT<T> cond;   // x': refined conditioning frame, in [0, 1]
};

namespace detail {

// Replicates a single-channel map across the three color channels.
template <typename T>
VarT<T> spread3(const VarT<T>& m) {
  return concat_c<T>({m, m, m});
}

}  // namespace detail

template <typename T>
class EnhancementT {
 public:
  EnhancementT() = default;
  // `canf_*` size the adaptive compressor; `merge_width` the merge/refine
  // feature width; `skip1_c`/`skip2_c` the two skip-generator stages.
  EnhancementT(ParamStoreT<T>& ps, Rng& rng, const std::string& prefix,
               int canf_width, int latent_c, int hyper_c, int merge_width,
               int skip1_c, int skip2_c)
      : latent_c_(latent_c),
        comp_(ps, rng, prefix + ".canf", canf_width, latent_c, hyper_c, true),
        mg0_(ps, rng, prefix + ".merge.c0", 9, merge_width, 3, 1, false,
             Init::kHe, false),
        mg1_(ps, rng, prefix + ".merge.c1", merge_width, merge_width, 3, 1,
             false, Init::kHe, false),
        mr0_(ps, rng, prefix + ".merge.r0", merge_width, false),
        mr1_(ps, rng, prefix + ".merge.r1", merge_width, false),
        mg2_(ps, rng, prefix + ".merge.c2", merge_width, merge_width, 3, 1,
             false, Init::kHe, false),
        mg3_(ps, rng, prefix + ".merge.c3", merge_width, 3, 3, 1, false,
             Init::kZero, false),
        rf0_(ps, rng, prefix + ".refine.c0", 3, merge_width, 3, 1, false,
             Init::kHe, false),
        rr0_(ps, rng, prefix + ".refine.r0", merge_width, false),
        rr1_(ps, rng, prefix + ".refine.r1", merge_width, false),
        rr2_(ps, rng, prefix + ".refine.r2", merge_width, false),
        rf1_(ps, rng, prefix + ".refine.c1", merge_width, 3, 3, 1, false,
             Init::kZero, false),
        sk0_(ps, rng, prefix + ".skip.c0", 7, skip1_c, 5, 2, false, Init::kHe,
             false),
        sk1_(ps, rng, prefix + ".skip.c1", skip1_c, skip1_c, 5, 2, false,
             Init::kHe, false),
        sk2_(ps, rng, prefix + ".skip.c2", skip1_c, skip1_c, 5, 2, false,
             Init::kHe, false),
        sk3_(ps, rng, prefix + ".skip.c3", skip1_c, skip1_c, 5, 2, false,
             Init::kHe, false),
        sh0_(ps, rng, prefix + ".skip.h0", skip1_c + 2 * latent_c, skip2_c, 3,
             1, false, Init::kHe, false),
        sr0_(ps, rng, prefix + ".skip.r0", skip2_c, false),
        sr1_(ps, rng, prefix + ".skip.r1", skip2_c, false),
        sh1_(ps, rng, prefix + ".skip.h1", skip2_c, latent_c, 3, 1, false,
             Init::kZero, false) {}

  // Merging-map generator + Refine-Net. The map is a per-pixel softmax over
  // {sr, warped_prev, warped_next}; the fused frame is their convex
  // combination, refined through a residual network with a global skip.
  // Untrained, the map is uniform (1/3) and cond equals the fused average.
  MergeOutT<T> merge(const VarT<T>& sr, const VarT<T>& warped_prev,
                     const VarT<T>& warped_next) const {
    check(sr.value().same_shape(warped_prev.value()) &&
              sr.value().same_shape(warped_next.value()),
          "merge: shape mismatch");
    VarT<T> in = concat_c<T>({sr, warped_prev, warped_next});
    VarT<T> h = leaky_relu(mg0_(in), T(0.2));
    h = mr1_(mr0_(leaky_relu(mg1_(h), T(0.2))));
    h = leaky_relu(mg2_(h), T(0.2));
    MergeOutT<T> out;
    out.map = softmax_c(mg3_(h));
    out.fused = add(
        add(mul(detail::spread3(slice_c(out.map, 0, 1)), sr),
            mul(detail::spread3(slice_c(out.map, 1, 2)), warped_prev)),
        mul(detail::spread3(slice_c(out.map, 2, 3)), warped_next));
    VarT<T> r = rr2_(rr1_(rr0_(leaky_relu(rf0_(out.fused), T(0.2)))));
    out.cond = clamp_v(add(out.fused, rf1_(r)), T(0), T(1));
    return out;
  }

  // Stage 1 of the skip generator: strided convolutions taking the motion
  // fields and x' down to the latent grid. Kept separate so one evaluation
  // serves every (mu, sigma) the mask factory sees.
  VarT<T> skip_features(const VarT<T>& flow_prev, const VarT<T>& flow_next,
                        const VarT<T>& cond) const {
    VarT<T> in = concat_c<T>({flow_prev, flow_next, cond});
    VarT<T> h = leaky_relu(sk0_(in), T(0.2));
    h = leaky_relu(sk1_(h), T(0.2));
    h = leaky_relu(sk2_(h), T(0.2));
    return leaky_relu(sk3_(h), T(0.2));
  }

  // Stage 2 up to the per-sample transmit probability (pre-rounding). Split
  // out because rounding is a straight-through op that finite differences
  // cannot probe; gradient checks run against this smooth head.
  VarT<T> skip_prob(const VarT<T>& features, const VarT<T>& mu,
                    const VarT<T>& sigma) const {
    check(features.dim(1) == mu.dim(1) && features.dim(2) == mu.dim(2),
          "skip_mask: latent grid mismatch");
    VarT<T> in = concat_c<T>({features, mu, log_v(sigma)});
    VarT<T> h = sr1_(sr0_(leaky_relu(sh0_(in), T(0.2))));
    return sigmoid_v(sh1_(h));
  }

  // Binary mask: round at 1/2 with a straight-through gradient. The
  // zero-initialized head puts the untrained probability at exactly 1/2,
  // which rounds up: transmit everything.
  VarT<T> skip_mask(const VarT<T>& features, const VarT<T>& mu,
                    const VarT<T>& sigma) const {
    return round_ste(skip_prob(features, mu, sigma));
  }

  VarT<T> generate_skip_mask(const VarT<T>& flow_prev, const VarT<T>& flow_next,
                             const VarT<T>& cond, const VarT<T>& mu,
                             const VarT<T>& sigma) const {
    return skip_mask(skip_features(flow_prev, flow_next, cond), mu, sigma);
  }

  // Full-resolution adaptive coding conditioned on x', with the
  // decoder-reproducible skip mask wired in as the mask factory. With
  // `use_skip` off every sample is transmitted and the generator stays out
  // of the graph (the pre-activation stage of training).
  CanfCodeT<T> code(const VarT<T>& x, const VarT<T>& cond,
                    const VarT<T>& flow_prev, const VarT<T>& flow_next, int fa,
                    CodeMode mode, Rng* noise = nullptr,
                    bool use_skip = true) const {
    if (!use_skip) return conditional_code(comp_, x, cond, fa, mode, noise);
    VarT<T> feat = skip_features(flow_prev, flow_next, cond);
    MaskFactoryT<T> factory = [this, feat](const VarT<T>& mu,
                                           const VarT<T>& sigma) {
      return skip_mask(feat, mu, sigma);
    };
    return conditional_code(comp_, x, cond, fa, mode, noise, factory);
  }

  // `mask_out`, when given, receives the mask regenerated during decoding.
  VarT<T> decode(const std::vector<std::vector<uint8_t>>& streams,
                 const VarT<T>& cond, const VarT<T>& flow_prev,
                 const VarT<T>& flow_next, int fa,
                 VarT<T>* mask_out = nullptr) const {
    VarT<T> feat = skip_features(flow_prev, flow_next, cond);
    MaskFactoryT<T> factory = [this, feat, mask_out](const VarT<T>& mu,
                                                     const VarT<T>& sigma) {
      VarT<T> m = skip_mask(feat, mu, sigma);
      if (mask_out) *mask_out = m;
      return m;
    };
    return conditional_decode(comp_, streams, cond, fa, factory);
  }

  const CanfCompressorT<T>& compressor() const { return comp_; }
  int latent_c() const { return latent_c_; }

  // ---- complexity accounting (full-resolution h x w inputs) ----
  int64_t macs_merge(int h, int w) const {
    return mg0_.macs(h, w) + mg1_.macs(h, w) + mr0_.macs(h, w) +
           mr1_.macs(h, w) + mg2_.macs(h, w) + mg3_.macs(h, w);
  }
  int64_t macs_refine(int h, int w) const {
    return rf0_.macs(h, w) + rr0_.macs(h, w) + rr1_.macs(h, w) +
           rr2_.macs(h, w) + rf1_.macs(h, w);
  }
  int64_t macs_skip(int h, int w) const {
    int64_t total = 0;
    const Conv2dT<T>* stage1[4] = {&sk0_, &sk1_, &sk2_, &sk3_};
    for (const auto* c : stage1) {
      total += c->macs(h, w);
      c->out_size(h, w, h, w);
    }
    return total + sh0_.macs(h, w) + sr0_.macs(h, w) + sr1_.macs(h, w) +
           sh1_.macs(h, w);
  }

 private:
  int latent_c_ = 0;
  CanfCompressorT<T> comp_;
  Conv2dT<T> mg0_, mg1_;
  ResBlockT<T> mr0_, mr1_;
  Conv2dT<T> mg2_, mg3_;
  Conv2dT<T> rf0_;
  ResBlockT<T> rr0_, rr1_, rr2_;
  Conv2dT<T> rf1_;
  Conv2dT<T> sk0_, sk1_, sk2_, sk3_;
  Conv2dT<T> sh0_;
  ResBlockT<T> sr0_, sr1_;
  Conv2dT<T> sh1_;
};

using MergeOut = MergeOutT<float>;
using Enhancement = EnhancementT<float>;

}  // namespace tlzmc
