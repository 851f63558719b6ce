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

#include "tlzmc/codec/entropy.hpp"
#include "tlzmc/core/module.hpp"

namespace tlzmc {

// The conditional compressor is an augmented normalizing flow with two
// additive coupling steps between the image branch and a latent branch,
// conditioned on a prediction of the frame. Couplings are purely additive, so
// the transform is exactly invertible and the rate reduces to the latent
// likelihood under a hyperprior-driven gaussian model. Frame-type adaptation
// (a per-channel affine after every convolution, selected by reference /
// non-reference B-frame type) is optional per compressor instance.

inline constexpr int kLatentStride = 16;  // latent grid is (C, H/16, W/16)

enum class CodeMode { kTrain, kEstimate, kReal };

enum FaIndex { kFaNone = -1, kFaRef = 0, kFaNonRef = 1 };

// Per-sample code length (bits) of a residual d = v - mu under N(0, sigma^2)
// integrated over a unit-wide bin, with a 1e-9 likelihood floor.
template <typename T>
VarT<T> gaussian_rate_map(const VarT<T>& d, const VarT<T>& sigma) {
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  auto cdf = [&](const VarT<T>& u) {
    return mul_scalar(add_scalar(erf_v(mul_scalar(u, inv_sqrt2)), T(1)),
                      T(0.5));
  };
  VarT<T> up = cdf(div_v(add_scalar(d, T(0.5)), sigma));
  VarT<T> dn = cdf(div_v(add_scalar(d, T(-0.5)), sigma));
  VarT<T> p = clamp_min_v(sub(up, dn), static_cast<T>(1e-9));
  const T inv_ln2 = static_cast<T>(1.4426950408889634074);
  return neg(mul_scalar(log_v(p), inv_ln2));
}

// Total estimated bits for a quantized latent under (mu, sigma); samples where
// `mask` is zero are skipped (they are never transmitted).
template <typename T>
VarT<T> rate_estimate(const VarT<T>& z_hat, const VarT<T>& mu,
                      const VarT<T>& sigma, const VarT<T>* mask = nullptr) {
  VarT<T> bits = gaussian_rate_map(sub(z_hat, mu), sigma);
  if (mask) bits = mul(bits, *mask);
  return sum_all(bits);
}

// Latent residual symbols: the values that actually get entropy-coded.
// Train mode substitutes additive uniform noise for rounding.
template <typename T>
VarT<T> latent_symbols(const VarT<T>& z, const VarT<T>& mu, CodeMode mode,
                       Rng* noise) {
  VarT<T> d = sub(z, mu);
  if (mode != CodeMode::kTrain) return round_ste(d);
  check(noise != nullptr, "train-mode quantization needs an rng");
  TensorT<T> n(d.value().shape);
  for (auto& v : n.data) v = static_cast<T>(noise->uniform() - 0.5);
  return add_fixed(d, std::move(n));
}

// Quantized latent: mu + symbols, the expression both encoder and decoder use.
template <typename T>
VarT<T> quantize_latent(const VarT<T>& z, const VarT<T>& mu, CodeMode mode,
                        Rng* noise = nullptr) {
  return add(latent_symbols(z, mu, mode, noise), mu);
}

// Skip substitution at the symbol level: transmitted samples keep s, skipped
// samples become exactly mu. Differentiable in both s and mask.
template <typename T>
VarT<T> skip_substitute(const VarT<T>& s, const VarT<T>& mu,
                        const VarT<T>& mask) {
  return add(mul(mask, s), mu);
}

namespace detail {

// Forces skipped symbols to an exact +0 so the encoder-side latent is
// bit-identical to what the decoder rebuilds. Values only (no gradients);
// used outside training.
template <typename T>
VarT<T> mask_select(const VarT<T>& s, const VarT<T>& mask) {
  TensorT<T> out(s.value().shape);
  for (int64_t i = 0; i < s.numel(); ++i)
    out[i] = mask.value()[i] > T(0.5) ? s.value()[i] : T(0);
  return VarT<T>::constant(std::move(out));
}

template <typename T>
std::vector<float> to_float_buf(const TensorT<T>& t) {
  std::vector<float> out(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i) out[static_cast<size_t>(i)] = static_cast<float>(t[i]);
  return out;
}

template <typename T>
std::vector<uint8_t> to_mask_buf(const TensorT<T>& t) {
  std::vector<uint8_t> out(static_cast<size_t>(t.numel()));
  for (int64_t i = 0; i < t.numel(); ++i)
    out[static_cast<size_t>(i)] = t[i] > T(0.5) ? 1 : 0;
  return out;
}

// One coupling sub-network: four stride-2 (t)convolutions with residual
// blocks in between. The final layer starts at zero so an untrained coupling
// is the identity.
template <typename T>
struct CouplingNetT {
  CouplingNetT() = default;
  CouplingNetT(ParamStoreT<T>& ps, Rng& rng, const std::string& name, int in_c,
               int mid, int out_c, bool up, bool fa)
      : c0(ps, rng, name + ".c0", in_c, mid, 5, 2, up, Init::kHe, fa),
        c1(ps, rng, name + ".c1", mid, mid, 5, 2, up, Init::kHe, fa),
        c2(ps, rng, name + ".c2", mid, mid, 5, 2, up, Init::kHe, fa),
        c3(ps, rng, name + ".c3", mid, out_c, 5, 2, up, Init::kZero, fa),
        r0(ps, rng, name + ".r0", mid, fa),
        r1(ps, rng, name + ".r1", mid, fa),
        r2(ps, rng, name + ".r2", mid, fa) {}

  VarT<T> operator()(const VarT<T>& in, int fa) const {
    VarT<T> h = r0(leaky_relu(c0(in, fa), T(0.2)), fa);
    h = r1(leaky_relu(c1(h, fa), T(0.2)), fa);
    h = r2(leaky_relu(c2(h, fa), T(0.2)), fa);
    return c3(h, fa);
  }

  int64_t macs(int h, int w) const {
    int64_t total = 0;
    const Conv2dT<T>* convs[4] = {&c0, &c1, &c2, &c3};
    const ResBlockT<T>* res[3] = {&r0, &r1, &r2};
    for (int i = 0; i < 4; ++i) {
      total += convs[i]->macs(h, w);
      convs[i]->out_size(h, w, h, w);
      if (i < 3) total += res[i]->macs(h, w);
    }
    return total;
  }

  Conv2dT<T> c0, c1, c2, c3;
  ResBlockT<T> r0, r1, r2;
};

}  // namespace detail

template <typename T>
struct FlowStateT {
  VarT<T> x_branch;  // y_2: the image-branch output, trained toward cond
  VarT<T> z_branch;  // z_2: the latent handed to the hyperprior
};

template <typename T>
struct HyperOutT {
  VarT<T> mu, sigma;       // per-sample gaussian params on the latent grid
  VarT<T> side_symbols;    // quantized (or noisy) side-latent residuals
  VarT<T> side_rate_bits;  // differentiable analytic estimate
  std::vector<uint8_t> side_payload;  // real mode only
};

template <typename T>
class CanfCompressorT {
 public:
  CanfCompressorT() = default;
  // `width` is the feature width, `latent_c` the transmitted latent depth,
  // `hyper_c` the side-latent depth; `fa` enables frame-type adaptation on
  // every convolution (couplings and hyperprior alike).
  CanfCompressorT(ParamStoreT<T>& ps, Rng& rng, const std::string& prefix,
                  int width, int latent_c, int hyper_c, bool fa)
      : prefix_(prefix), latent_c_(latent_c), hyper_c_(hyper_c),
        enc1_(ps, rng, prefix + ".enc1", 6, width, latent_c, false, fa),
        enc2_(ps, rng, prefix + ".enc2", 6, width, latent_c, false, fa),
        dec1_(ps, rng, prefix + ".dec1", latent_c + 3, width, 3, true, fa),
        dec2_(ps, rng, prefix + ".dec2", latent_c + 3, width, 3, true, fa),
        ha0_(ps, rng, prefix + ".ha0", latent_c, width, 3, 1, false, Init::kHe, fa),
        ha1_(ps, rng, prefix + ".ha1", width, width, 5, 2, false, Init::kHe, fa),
        ha2_(ps, rng, prefix + ".ha2", width, hyper_c, 5, 2, false, Init::kHe, fa),
        hs0_(ps, rng, prefix + ".hs0", hyper_c, width, 5, 2, true, Init::kHe, fa),
        hs1_(ps, rng, prefix + ".hs1", width, width, 5, 2, true, Init::kHe, fa),
        hs2_(ps, rng, prefix + ".hs2", width, 2 * latent_c, 3, 1, false, Init::kZero, fa),
        fp_mean_(ps.add(prefix + ".fp.mean", TensorT<T>({hyper_c}))),
        fp_raw_sigma_(ps.add(prefix + ".fp.raw_sigma", TensorT<T>({hyper_c}))) {}

  // z1 = enc1(x || cond); x1 = x - dec1(z1 || cond'); z2 = z1 + enc2(x1 ||
  // cond); y2 = x1 - dec2(z2 || cond'), with cond' = cond pooled to the
  // latent grid.
  FlowStateT<T> flow_forward(const VarT<T>& x, const VarT<T>& cond,
                             int fa) const {
    check(x.value().same_shape(cond.value()), "flow_forward: shape mismatch");
    VarT<T> cl = avg_pool2d(cond, kLatentStride);
    VarT<T> z1 = enc1_(concat_c<T>({x, cond}), fa);
    VarT<T> x1 = sub(x, dec1_(concat_c<T>({z1, cl}), fa));
    VarT<T> z2 = add(z1, enc2_(concat_c<T>({x1, cond}), fa));
    VarT<T> y2 = sub(x1, dec2_(concat_c<T>({z2, cl}), fa));
    return {y2, z2};
  }

  // Inverse couplings from a branch seed (the decoder substitutes cond for
  // the untransmitted y2); output clamped to [0, 1].
  VarT<T> flow_inverse_from(const VarT<T>& z_hat, const VarT<T>& cond,
                            const VarT<T>& y2_seed, int fa) const {
    check(z_hat.dim(0) == latent_c_ &&
              z_hat.dim(1) * kLatentStride == cond.dim(1) &&
              z_hat.dim(2) * kLatentStride == cond.dim(2),
          "flow_inverse: latent off the condition's grid");
    VarT<T> cl = avg_pool2d(cond, kLatentStride);
    VarT<T> x1 = add(y2_seed, dec2_(concat_c<T>({z_hat, cl}), fa));
    VarT<T> z1 = sub(z_hat, enc2_(concat_c<T>({x1, cond}), fa));
    VarT<T> x = add(x1, dec1_(concat_c<T>({z1, cl}), fa));
    return clamp_v(x, T(0), T(1));
  }

  VarT<T> flow_inverse(const VarT<T>& z_hat, const VarT<T>& cond,
                       int fa) const {
    return flow_inverse_from(z_hat, cond, cond, fa);
  }

  // Side-information path: analysis -> quantize -> factorized-prior coding ->
  // synthesis. (mu, sigma) derive from the quantized side latent so encoder
  // and decoder agree bit-exactly.
  HyperOutT<T> hyper_code(const VarT<T>& z, CodeMode mode, Rng* noise,
                          int fa) const {
    VarT<T> v = ha2_(leaky_relu(ha1_(leaky_relu(ha0_(z, fa), T(0.2)), fa),
                                T(0.2)), fa);
    int sh = v.dim(1), sw = v.dim(2);
    VarT<T> m = broadcast_c(fp_mean_, sh, sw);
    VarT<T> sg = broadcast_c(fp_sigma(), sh, sw);
    VarT<T> s = latent_symbols(v, m, mode, noise);
    HyperOutT<T> out;
    out.side_symbols = s;
    out.side_rate_bits = sum_all(gaussian_rate_map(s, sg));
    if (mode == CodeMode::kReal) {
      RangeEncoder enc;
      auto buf = detail::to_float_buf(s.value());
      encode_factorized_plane(enc, fp_tables(), buf.data(), hyper_c_,
                              static_cast<int64_t>(sh) * sw);
      out.side_payload = enc.finish();
    }
    synthesize(add(s, m), z.dim(1), z.dim(2), fa, out.mu, out.sigma);
    return out;
  }

  // Decoder side of hyper_code for a real bitstream.
  void hyper_decode(const std::vector<uint8_t>& payload, int lh, int lw,
                    int fa, VarT<T>& mu, VarT<T>& sigma) const {
    int sh = side_h(side_h(lh)), sw = side_h(side_h(lw));
    RangeDecoder dec(payload);
    std::vector<float> buf(static_cast<size_t>(hyper_c_) * sh * sw);
    decode_factorized_plane(dec, fp_tables(), hyper_c_,
                            static_cast<int64_t>(sh) * sw, buf.data());
    TensorT<T> st({hyper_c_, sh, sw});
    for (size_t i = 0; i < buf.size(); ++i) st[static_cast<int64_t>(i)] = static_cast<T>(buf[i]);
    VarT<T> s = VarT<T>::constant(std::move(st));
    synthesize(add(s, broadcast_c(fp_mean_, sh, sw)), lh, lw, fa, mu, sigma);
  }

  // Entropy-codes rounded latent symbols with per-sample sigma; a null mask
  // transmits everything.
  static std::vector<uint8_t> encode_latent(const TensorT<T>& symbols,
                                            const TensorT<T>& sigma,
                                            const uint8_t* mask) {
    RangeEncoder enc;
    auto sbuf = detail::to_float_buf(symbols);
    auto gbuf = detail::to_float_buf(sigma);
    encode_gaussian_plane(enc, sbuf.data(), gbuf.data(), mask,
                          symbols.numel());
    return enc.finish();
  }

  static TensorT<T> decode_latent(const std::vector<uint8_t>& payload,
                                  const TensorT<T>& sigma,
                                  const uint8_t* mask) {
    RangeDecoder dec(payload);
    auto gbuf = detail::to_float_buf(sigma);
    std::vector<float> sbuf(static_cast<size_t>(sigma.numel()));
    decode_gaussian_plane(dec, gbuf.data(), mask, sigma.numel(), sbuf.data());
    TensorT<T> out(sigma.shape);
    for (size_t i = 0; i < sbuf.size(); ++i) out[static_cast<int64_t>(i)] = static_cast<T>(sbuf[i]);
    return out;
  }

  // ---- complexity accounting (one application at frame size h x w) ----
  int64_t macs_flow_forward(int h, int w) const {
    return enc1_.macs(h, w) + enc2_.macs(h, w) +
           dec1_.macs(h / kLatentStride, w / kLatentStride) +
           dec2_.macs(h / kLatentStride, w / kLatentStride);
  }
  int64_t macs_flow_inverse(int h, int w) const {
    return enc2_.macs(h, w) +
           dec1_.macs(h / kLatentStride, w / kLatentStride) +
           dec2_.macs(h / kLatentStride, w / kLatentStride);
  }
  int64_t macs_hyper_analysis(int h, int w) const {
    int lh = h / kLatentStride, lw = w / kLatentStride;
    int64_t total = ha0_.macs(lh, lw);
    int oh, ow;
    ha0_.out_size(lh, lw, oh, ow);
    total += ha1_.macs(oh, ow);
    ha1_.out_size(oh, ow, oh, ow);
    return total + ha2_.macs(oh, ow);
  }
  int64_t macs_hyper_synthesis(int h, int w) const {
    int lh = h / kLatentStride, lw = w / kLatentStride;
    int sh1 = side_h(lh), sw1 = side_h(lw);
    return hs0_.macs(side_h(sh1), side_h(sw1)) + hs1_.macs(sh1, sw1) +
           hs2_.macs(lh, lw);
  }

  const std::string& prefix() const { return prefix_; }
  int latent_c() const { return latent_c_; }
  int hyper_c() const { return hyper_c_; }

 private:
  static int side_h(int n) { return conv_out_size(n, 5, 2, 2); }

  VarT<T> fp_sigma() const {
    return add_scalar(softplus_v(fp_raw_sigma_), static_cast<T>(kSigmaMin));
  }

  std::vector<CdfTable> fp_tables() const {
    std::vector<CdfTable> tables;
    VarT<T> sg = fp_sigma();
    tables.reserve(static_cast<size_t>(hyper_c_));
    for (int c = 0; c < hyper_c_; ++c)
      tables.push_back(gaussian_cdf(0.0, static_cast<double>(sg.value()[c])));
    return tables;
  }

  // Hyper synthesis: two stride-2 upsamplings (cropped back onto the latent
  // pyramid) and a final head producing (mu, raw sigma).
  void synthesize(const VarT<T>& v_hat, int lh, int lw, int fa, VarT<T>& mu,
                  VarT<T>& sigma) const {
    VarT<T> h = crop_hw(leaky_relu(hs0_(v_hat, fa), T(0.2)), side_h(lh),
                        side_h(lw));
    h = crop_hw(leaky_relu(hs1_(h, fa), T(0.2)), lh, lw);
    VarT<T> head = hs2_(h, fa);
    mu = slice_c(head, 0, latent_c_);
    sigma = add_scalar(softplus_v(slice_c(head, latent_c_, 2 * latent_c_)),
                       static_cast<T>(kSigmaMin));
  }

  std::string prefix_;
  int latent_c_ = 0, hyper_c_ = 0;
  detail::CouplingNetT<T> enc1_, enc2_;
  detail::CouplingNetT<T> dec1_, dec2_;
  Conv2dT<T> ha0_, ha1_, ha2_;
  Conv2dT<T> hs0_, hs1_, hs2_;
  VarT<T> fp_mean_, fp_raw_sigma_;
};

// One fully coded frame through a conditional compressor.
template <typename T>
struct CanfCodeT {
  VarT<T> recon;      // decoded frame, clamped to [0, 1]
  VarT<T> y2;         // encoder-side branch output (regularized toward cond)
  VarT<T> z_hat;      // decoder-visible latent
  VarT<T> mu, sigma;
  VarT<T> mask;       // skip mask actually applied (undefined when none)
  VarT<T> rate_bits;  // differentiable latent + side estimate
  double payload_bits = 0;                    // real mode: actual coded bits
  std::vector<std::vector<uint8_t>> streams;  // real mode: {latent, side}
};

// Builds a skip mask from the hyperprior output; an empty function means
// every sample is transmitted.
template <typename T>
using MaskFactoryT =
    std::function<VarT<T>(const VarT<T>& mu, const VarT<T>& sigma)>;

// The full conditional coding pipeline: flow -> hyperprior -> quantization ->
// optional skip substitution -> (real mode) range coding -> inverse flow.
// The encoder reconstructs through the exact decoder expression so both sides
// agree bit-for-bit on one platform.
template <typename T>
CanfCodeT<T> conditional_code(const CanfCompressorT<T>& comp, const VarT<T>& x,
                              const VarT<T>& cond, int fa, CodeMode mode,
                              Rng* noise = nullptr,
                              const MaskFactoryT<T>& mask_factory = nullptr) {
  CanfCodeT<T> out;
  FlowStateT<T> flow = comp.flow_forward(x, cond, fa);
  out.y2 = flow.x_branch;
  HyperOutT<T> hyper = comp.hyper_code(flow.z_branch, mode, noise, fa);
  out.mu = hyper.mu;
  out.sigma = hyper.sigma;

  VarT<T> s = latent_symbols(flow.z_branch, hyper.mu, mode, noise);
  VarT<T> bits = gaussian_rate_map(s, hyper.sigma);
  VarT<T> s_vis = s;
  if (mask_factory) {
    out.mask = mask_factory(hyper.mu, hyper.sigma);
    bits = mul(bits, out.mask);
    s_vis = mode == CodeMode::kTrain ? mul(out.mask, s)
                                     : detail::mask_select(s, out.mask);
  }
  out.z_hat = add(s_vis, hyper.mu);
  out.rate_bits = add(sum_all(bits), hyper.side_rate_bits);

  if (mode == CodeMode::kReal) {
    std::vector<uint8_t> mask_buf;
    const uint8_t* mask_ptr = nullptr;
    if (out.mask.defined()) {
      mask_buf = detail::to_mask_buf(out.mask.value());
      mask_ptr = mask_buf.data();
    }
    out.streams.push_back(
        comp.encode_latent(s_vis.value(), hyper.sigma.value(), mask_ptr));
    out.streams.push_back(hyper.side_payload);
    out.payload_bits =
        8.0 * (out.streams[0].size() + out.streams[1].size());
  }

  out.recon = comp.flow_inverse(out.z_hat, cond, fa);
  return out;
}

// Decoder mirror of conditional_code for a real bitstream. The mask factory
// must be the same deterministic function of (mu, sigma) the encoder used.
template <typename T>
VarT<T> conditional_decode(const CanfCompressorT<T>& comp,
                           const std::vector<std::vector<uint8_t>>& streams,
                           const VarT<T>& cond, int fa,
                           const MaskFactoryT<T>& mask_factory = nullptr) {
  check(streams.size() == 2, "conditional decode: want {latent, side}");
  int lh = cond.dim(1) / kLatentStride, lw = cond.dim(2) / kLatentStride;
  VarT<T> mu, sigma;
  comp.hyper_decode(streams[1], lh, lw, fa, mu, sigma);

  std::vector<uint8_t> mask_buf;
  const uint8_t* mask_ptr = nullptr;
  if (mask_factory) {
    VarT<T> mask = mask_factory(mu, sigma);
    mask_buf = detail::to_mask_buf(mask.value());
    mask_ptr = mask_buf.data();
  }
  TensorT<T> s = comp.decode_latent(streams[0], sigma.value(), mask_ptr);
  VarT<T> z_hat = add(VarT<T>::constant(std::move(s)), mu);
  return comp.flow_inverse(z_hat, cond, fa);
}

// Intra coding runs the same backbone unconditionally: the condition is a
// zero frame and no frame-type adaptation applies.
template <typename T>
CanfCodeT<T> intra_code(const CanfCompressorT<T>& comp, const VarT<T>& x,
                        CodeMode mode, Rng* noise = nullptr) {
  VarT<T> zero = VarT<T>::constant(TensorT<T>(x.value().shape));
  return conditional_code(comp, x, zero, kFaNone, mode, noise);
}

template <typename T>
VarT<T> intra_decode(const CanfCompressorT<T>& comp,
                     const std::vector<std::vector<uint8_t>>& streams, int h,
                     int w) {
  TensorT<T> zero({3, h, w});
  return conditional_decode(comp, streams, VarT<T>::constant(std::move(zero)),
                            kFaNone);
}

using CanfCompressor = CanfCompressorT<float>;
using FlowState = FlowStateT<float>;
using HyperOut = HyperOutT<float>;
using CanfCode = CanfCodeT<float>;

}  // namespace tlzmc
