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

// The base layer codes a learned 4x-downsampled version of the target frame
// with the conditional compressor (condition: the equally downsampled
// interpolated frame), then super-resolves the decoded result back to full
// resolution. No skip mask here — every latent sample is transmitted.
//
// Both scalers combine a fixed resampling skip (4x average pool / bilinear
// upsampling) with a learned correction whose final convolution starts at
// zero: untrained, downsample() is exactly the average pool and
// super_resolve() exactly the bilinear upsampler, so training starts from a
// sane operating point instead of a random image mapping.

template <typename T>
struct BaseCodeT {
  CanfCodeT<T> code;   // quarter-resolution code; code.recon is x̂^DS
  VarT<T> ds_target;   // x^DS: the encoder-side downsampled target
  VarT<T> sr_frame;    // x̂^SR: super-resolved reconstruction, full size
};

template <typename T>
class BaseLayerT {
 public:
  BaseLayerT() = default;
  // `canf_width`/`latent_c`/`hyper_c` size the quarter-resolution compressor;
  // `scaler_width` sizes the DS/SR correction features; `fa` enables
  // frame-type adaptation inside the compressor.
  BaseLayerT(ParamStoreT<T>& ps, Rng& rng, const std::string& prefix,
             int canf_width, int latent_c, int hyper_c, int scaler_width,
             bool fa)
      : comp_(ps, rng, prefix + ".canf", canf_width, latent_c, hyper_c, fa),
        ds0_(ps, rng, prefix + ".ds.c0", 3, scaler_width, 5, 2, false,
             Init::kHe, false),
        dr0_(ps, rng, prefix + ".ds.r0", scaler_width, false),
        dr1_(ps, rng, prefix + ".ds.r1", scaler_width, false),
        ds1_(ps, rng, prefix + ".ds.c1", scaler_width, 3, 5, 2, false,
             Init::kZero, false),
        sr0_(ps, rng, prefix + ".sr.c0", 3, scaler_width, 3, 1, false,
             Init::kHe, false),
        sr1_(ps, rng, prefix + ".sr.r0", scaler_width, false),
        sr2_(ps, rng, prefix + ".sr.r1", scaler_width, false),
        su0_(ps, rng, prefix + ".sr.u0", scaler_width, scaler_width, 5, 2,
             true, Init::kHe, false),
        su1_(ps, rng, prefix + ".sr.u1", scaler_width, 3, 5, 2, true,
             Init::kZero, false) {}

  // (3, H, W) -> (3, H/4, W/4), H and W divisible by 4; values in [0, 1].
  VarT<T> downsample(const VarT<T>& x) const {
    VarT<T> skip = avg_pool2d(x, 4);
    VarT<T> h = dr1_(dr0_(leaky_relu(ds0_(x), T(0.2))));
    return clamp_v(add(skip, ds1_(h)), T(0), T(1));
  }

  // (3, h, w) -> (3, 4h, 4w); values in [0, 1].
  VarT<T> super_resolve(const VarT<T>& x_ds) const {
    VarT<T> skip = upsample_bilinear2(upsample_bilinear2(x_ds));
    VarT<T> h = sr2_(sr1_(leaky_relu(sr0_(x_ds), T(0.2))));
    h = leaky_relu(su0_(h), T(0.2));
    return clamp_v(add(skip, su1_(h)), T(0), T(1));
  }

  // Codes the downsampled target against the downsampled condition and
  // super-resolves the reconstruction. Inputs are full-resolution frames.
  BaseCodeT<T> code(const VarT<T>& x, const VarT<T>& x_bar, int fa,
                    CodeMode mode, Rng* noise = nullptr) const {
    BaseCodeT<T> out;
    out.ds_target = downsample(x);
    VarT<T> cond_ds = downsample(x_bar);
    out.code = conditional_code(comp_, out.ds_target, cond_ds, fa, mode, noise);
    out.sr_frame = super_resolve(out.code.recon);
    return out;
  }

  // Decoder mirror: rebuilds the condition from the (decoder-side) x̄ and
  // reproduces x̂^DS and x̂^SR bit-exactly.
  BaseCodeT<T> decode(const std::vector<std::vector<uint8_t>>& streams,
                      const VarT<T>& x_bar, int fa) const {
    BaseCodeT<T> out;
    VarT<T> cond_ds = downsample(x_bar);
    out.code.recon = conditional_decode(comp_, streams, cond_ds, fa);
    out.sr_frame = super_resolve(out.code.recon);
    return out;
  }

  const CanfCompressorT<T>& compressor() const { return comp_; }

  // ---- complexity accounting (inputs at full resolution h x w) ----
  int64_t macs_downsample(int h, int w) const {
    int64_t total = ds0_.macs(h, w);
    int oh, ow;
    ds0_.out_size(h, w, oh, ow);
    total += dr0_.macs(oh, ow) + dr1_.macs(oh, ow);
    return total + ds1_.macs(oh, ow);
  }
  int64_t macs_super_resolve(int h, int w) const {
    int qh = h / 4, qw = w / 4;
    int64_t total = sr0_.macs(qh, qw) + sr1_.macs(qh, qw) + sr2_.macs(qh, qw) +
                    su0_.macs(qh, qw);
    int oh, ow;
    su0_.out_size(qh, qw, oh, ow);
    return total + su1_.macs(oh, ow);
  }

 private:
  CanfCompressorT<T> comp_;
  Conv2dT<T> ds0_;
  ResBlockT<T> dr0_, dr1_;
  Conv2dT<T> ds1_;
  Conv2dT<T> sr0_;
  ResBlockT<T> sr1_, sr2_;
  Conv2dT<T> su0_, su1_;
};

using BaseCode = BaseCodeT<float>;
using BaseLayer = BaseLayerT<float>;

}  // namespace tlzmc
