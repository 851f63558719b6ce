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

#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"
#include "tlzmc/codec/base_layer.hpp"
#include "tlzmc/codec/enhancement.hpp"

using namespace tlzmc;
using tlzmc::testing::fd_check;

namespace {

template <typename T>
void randomize_params(ParamStoreT<T>& ps, Rng& rng, double std,
                      bool keep_fa_identity = false) {
  for (const auto& [name, v] : ps.all()) {
    if (keep_fa_identity && name.find(".fa_") != std::string::npos) continue;
    for (auto& x : v.mutable_value().data)
      x = static_cast<T>(rng.normal() * std);
  }
}

template <typename T>
VarT<T> random_input(Rng& rng, std::vector<int> shape, double lo = 0.0,
                     double hi = 1.0) {
  TensorT<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return VarT<T>(std::move(t), false);
}

template <typename T>
bool bit_equal(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("scalers follow the 4x shape rule; untrained they are the fixed "
          "resamplers") {
  Rng rng(81);
  ParamStore ps;
  BaseLayer base(ps, rng, "base", 8, 8, 4, 8, true);

  VarT<float> big = random_input<float>(rng, {3, 256, 256});
  VarT<float> ds = base.downsample(big);
  REQUIRE(ds.dim(0) == 3);
  REQUIRE(ds.dim(1) == 64);
  REQUIRE(ds.dim(2) == 64);

  VarT<float> small = random_input<float>(rng, {3, 64, 64});
  REQUIRE(base.downsample(small).dim(1) == 16);

  VarT<float> sr = base.super_resolve(ds);
  REQUIRE(sr.dim(1) == 256);
  REQUIRE(sr.dim(2) == 256);

  // Zero-initialized correction heads: the scalers start as the plain
  // average pool and bilinear upsampler, bit-exactly.
  VarT<float> pool = avg_pool2d(big, 4);
  REQUIRE(bit_equal(ds.value(), pool.value()));
  VarT<float> up = upsample_bilinear2(upsample_bilinear2(ds));
  REQUIRE(bit_equal(sr.value(), up.value()));

  VarT<float> odd = random_input<float>(rng, {3, 250, 250});
  REQUIRE_THROWS(base.downsample(odd));
}

TEST_CASE("base layer: estimate/real agreement, closed loop, rate tightness") {
  Rng rng(82);
  ParamStore ps;
  BaseLayer base(ps, rng, "base", 8, 8, 4, 8, true);
  randomize_params(ps, rng, 0.05, /*keep_fa_identity=*/true);

  VarT<float> x = random_input<float>(rng, {3, 128, 128});
  VarT<float> xb = random_input<float>(rng, {3, 128, 128});

  NoGradGuard ng;
  BaseCode est = base.code(x, xb, kFaRef, CodeMode::kEstimate);
  REQUIRE(est.code.streams.empty());
  REQUIRE(est.code.payload_bits == 0.0);
  REQUIRE(est.code.rate_bits.value()[0] > 0.0f);

  BaseCode real = base.code(x, xb, kFaRef, CodeMode::kReal);
  REQUIRE(real.code.streams.size() == 2);
  // Rounding path is identical, so estimate and real reconstruct the same.
  REQUIRE(bit_equal(est.code.recon.value(), real.code.recon.value()));
  REQUIRE(bit_equal(est.sr_frame.value(), real.sr_frame.value()));

  double rate = real.code.rate_bits.value()[0];
  REQUIRE(std::abs(real.code.payload_bits - rate) <= 0.02 * rate + 64.0);

  BaseCode dec = base.decode(real.code.streams, xb, kFaRef);
  REQUIRE(bit_equal(dec.code.recon.value(), real.code.recon.value()));
  REQUIRE(bit_equal(dec.sr_frame.value(), real.sr_frame.value()));
  for (int64_t i = 0; i < dec.sr_frame.numel(); ++i) {
    REQUIRE(dec.sr_frame.value()[i] >= 0.0f);
    REQUIRE(dec.sr_frame.value()[i] <= 1.0f);
  }
}

TEST_CASE("merge map is a per-pixel convex combination") {
  Rng rng(83);
  ParamStore ps;
  Enhancement enh(ps, rng, "enh", 8, 8, 4, 8, 6, 8);
  const int h = 32, w = 32;
  VarT<float> sr = random_input<float>(rng, {3, h, w});
  VarT<float> wp = random_input<float>(rng, {3, h, w});
  VarT<float> wn = random_input<float>(rng, {3, h, w});

  SECTION("untrained: uniform map, fused average, refine is the identity") {
    MergeOut m = enh.merge(sr, wp, wn);
    for (int64_t i = 0; i < m.map.numel(); ++i)
      REQUIRE(m.map.value()[i] == Catch::Approx(1.0 / 3).margin(1e-7));
    REQUIRE(bit_equal(m.cond.value(), m.fused.value()));
  }

  SECTION("randomized: weights sum to one and fused stays within bounds") {
    randomize_params(ps, rng, 0.08, /*keep_fa_identity=*/true);
    MergeOut m = enh.merge(sr, wp, wn);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        float s = m.map.value().at(0, y, x) + m.map.value().at(1, y, x) +
                  m.map.value().at(2, y, x);
        REQUIRE(std::abs(s - 1.0f) < 1e-6f);
        for (int c = 0; c < 3; ++c) {
          float a = sr.value().at(c, y, x), b = wp.value().at(c, y, x),
                d = wn.value().at(c, y, x);
          float lo = std::min({a, b, d}), hi = std::max({a, b, d});
          REQUIRE(m.fused.value().at(c, y, x) >= lo - 1e-6f);
          REQUIRE(m.fused.value().at(c, y, x) <= hi + 1e-6f);
        }
      }
  }

  SECTION("identical inputs fuse to that input for any weights") {
    randomize_params(ps, rng, 0.08, /*keep_fa_identity=*/true);
    MergeOut m = enh.merge(sr, sr, sr);
    for (int64_t i = 0; i < m.fused.numel(); ++i)
      REQUIRE(std::abs(m.fused.value()[i] - sr.value()[i]) < 1e-6f);
  }
}

TEST_CASE("skip mask: binary, grid-checked, deterministic, all-transmit "
          "untrained") {
  Rng rng(84);
  ParamStore ps;
  const int latent_c = 8;
  Enhancement enh(ps, rng, "enh", 8, latent_c, 4, 8, 6, 8);
  const int h = 64, w = 64;
  VarT<float> fp = random_input<float>(rng, {2, h, w}, -2.0, 2.0);
  VarT<float> fn = random_input<float>(rng, {2, h, w}, -2.0, 2.0);
  VarT<float> cond = random_input<float>(rng, {3, h, w});
  VarT<float> mu = random_input<float>(rng, {latent_c, h / 16, w / 16}, -1.0,
                                       1.0);
  VarT<float> sg = random_input<float>(rng, {latent_c, h / 16, w / 16}, 0.2,
                                       2.0);

  VarT<float> m0 = enh.generate_skip_mask(fp, fn, cond, mu, sg);
  REQUIRE(m0.dim(0) == latent_c);
  REQUIRE(m0.dim(1) == h / 16);
  REQUIRE(m0.dim(2) == w / 16);
  // Untrained head: probability exactly 1/2 everywhere, which rounds up.
  for (int64_t i = 0; i < m0.numel(); ++i) REQUIRE(m0.value()[i] == 1.0f);

  randomize_params(ps, rng, 0.3, /*keep_fa_identity=*/true);
  VarT<float> m1 = enh.generate_skip_mask(fp, fn, cond, mu, sg);
  int ones = 0;
  for (int64_t i = 0; i < m1.numel(); ++i) {
    REQUIRE((m1.value()[i] == 0.0f || m1.value()[i] == 1.0f));
    ones += m1.value()[i] == 1.0f ? 1 : 0;
  }
  REQUIRE(ones > 0);
  REQUIRE(ones < m1.numel());

  VarT<float> m2 = enh.generate_skip_mask(fp, fn, cond, mu, sg);
  REQUIRE(bit_equal(m1.value(), m2.value()));

  VarT<float> bad_mu = random_input<float>(rng, {latent_c, 2, 2});
  REQUIRE_THROWS(enh.generate_skip_mask(fp, fn, cond, bad_mu, bad_mu));
}

TEST_CASE("straight-through rounding passes gradients like no rounding") {
  VarT<double> pre(TensorT<double>({1, 1, 1}, 0.3), true);
  VarT<double> wgt = VarT<double>::constant(TensorT<double>({1, 1, 1}, 1.7));

  VarT<double> with_round = sum_all(mul(round_ste(sigmoid_v(pre)), wgt));
  pre.zero_grad();
  with_round.backward();
  double g_ste = pre.grad()[0];

  VarT<double> without = sum_all(mul(sigmoid_v(pre), wgt));
  pre.zero_grad();
  without.backward();
  double g_plain = pre.grad()[0];

  REQUIRE(g_ste == g_plain);
  // Forward values do differ: that is the point of the estimator.
  REQUIRE(with_round.value()[0] != without.value()[0]);
}

TEST_CASE("enhancement closed loop: mask regenerated, payload tight") {
  Rng rng(85);
  ParamStore ps;
  Enhancement enh(ps, rng, "enh", 8, 8, 4, 8, 6, 8);
  randomize_params(ps, rng, 0.1, /*keep_fa_identity=*/true);

  const int h = 64, w = 64;
  VarT<float> x = random_input<float>(rng, {3, h, w});
  VarT<float> sr = random_input<float>(rng, {3, h, w});
  VarT<float> wp = random_input<float>(rng, {3, h, w});
  VarT<float> wn = random_input<float>(rng, {3, h, w});
  VarT<float> fp = random_input<float>(rng, {2, h, w}, -2.0, 2.0);
  VarT<float> fn = random_input<float>(rng, {2, h, w}, -2.0, 2.0);

  NoGradGuard ng;
  MergeOut m = enh.merge(sr, wp, wn);
  for (int fa : {kFaRef, kFaNonRef}) {
    CanfCode code = enh.code(x, m.cond, fp, fn, fa, CodeMode::kReal);
    REQUIRE(code.streams.size() == 2);  // latent + side; the mask is never sent
    for (int64_t i = 0; i < code.mask.numel(); ++i)
      REQUIRE((code.mask.value()[i] == 0.0f || code.mask.value()[i] == 1.0f));

    double rate = code.rate_bits.value()[0];
    REQUIRE(std::abs(code.payload_bits - rate) <= 0.02 * rate + 64.0);

    VarT<float> dec = enh.decode(code.streams, m.cond, fp, fn, fa);
    REQUIRE(bit_equal(dec.value(), code.recon.value()));
  }
}

TEST_CASE("base-layer gradients match finite differences") {
  Rng rng(86);
  ParamStoreT<double> ps;
  BaseLayerT<double> base(ps, rng, "base", 4, 4, 2, 4, true);
  randomize_params(ps, rng, 0.04);

  VarT<double> x(testing::random_tensor(rng, {3, 64, 64}, 0.2, 0.8), true);
  VarT<double> xb(testing::random_tensor(rng, {3, 64, 64}, 0.2, 0.8), false);

  auto loss = [&]() {
    Rng noise(991);
    BaseCodeT<double> r = base.code(x, xb, kFaRef, CodeMode::kTrain, &noise);
    VarT<double> d = mul_scalar(mse_loss(r.sr_frame, x), 256.0);
    VarT<double> dd = mul_scalar(mse_loss(r.code.recon, r.ds_target), 64.0);
    return add(add(d, dd), r.code.rate_bits);
  };

  const std::pair<const char*, VarT<double>> probes[] = {
      {"ds.c0.w", ps.at("base.ds.c0.w")},
      {"ds.c1.w", ps.at("base.ds.c1.w")},
      {"sr.u1.w", ps.at("base.sr.u1.w")},
      {"sr.c0.b", ps.at("base.sr.c0.b")},
  };
  for (const auto& [name, var] : probes) {
    INFO(name);
    auto rep = fd_check({var}, loss, 1e-5, /*rel_floor=*/1e-6);
    REQUIRE(rep.max_rel_err < 1e-3);
    REQUIRE(rep.max_abs_err < 1e-4);
  }
}

TEST_CASE("enhancement gradients match finite differences (soft mask)") {
  Rng rng(87);
  ParamStoreT<double> ps;
  EnhancementT<double> enh(ps, rng, "enh", 4, 4, 2, 4, 4, 4);
  randomize_params(ps, rng, 0.04);

  VarT<double> x(testing::random_tensor(rng, {3, 16, 16}, 0.2, 0.8), false);
  VarT<double> sr(testing::random_tensor(rng, {3, 16, 16}, 0.2, 0.8), true);
  VarT<double> wp(testing::random_tensor(rng, {3, 16, 16}, 0.2, 0.8), true);
  VarT<double> wn(testing::random_tensor(rng, {3, 16, 16}, 0.2, 0.8), true);
  VarT<double> fp =
      VarT<double>(testing::random_tensor(rng, {2, 16, 16}, -1.5, 1.5), false);
  VarT<double> fn =
      VarT<double>(testing::random_tensor(rng, {2, 16, 16}, -1.5, 1.5), false);

  // The rounded mask is a straight-through op finite differences cannot see;
  // the check runs the pipeline on the pre-round probability (smooth), which
  // shares every gradient path with the rounded version by the straight-
  // through identity (previous test).
  auto loss = [&]() {
    Rng noise(992);
    MergeOutT<double> m = enh.merge(sr, wp, wn);
    VarT<double> feat = enh.skip_features(fp, fn, m.cond);
    MaskFactoryT<double> soft = [&](const VarT<double>& mu,
                                    const VarT<double>& sg) {
      return enh.skip_prob(feat, mu, sg);
    };
    CanfCodeT<double> code =
        conditional_code(enh.compressor(), x, m.cond, kFaNonRef,
                         CodeMode::kTrain, &noise, soft);
    VarT<double> d = mul_scalar(mse_loss(code.recon, x), 256.0);
    VarT<double> y2r = mul_scalar(mse_loss(code.y2, m.cond), 16.0);
    return add(add(d, y2r), code.rate_bits);
  };

  const std::pair<const char*, VarT<double>> probes[] = {
      {"merge.c0.w", ps.at("enh.merge.c0.w")},
      {"merge.c3.w", ps.at("enh.merge.c3.w")},
      {"refine.c1.w", ps.at("enh.refine.c1.w")},
      {"skip.c0.w", ps.at("enh.skip.c0.w")},
      {"skip.h0.b", ps.at("enh.skip.h0.b")},
      {"skip.h1.w", ps.at("enh.skip.h1.w")},
  };
  for (const auto& [name, var] : probes) {
    INFO(name);
    auto rep = fd_check({var}, loss, 1e-5, /*rel_floor=*/1e-6);
    REQUIRE(rep.max_rel_err < 1e-3);
    REQUIRE(rep.max_abs_err < 1e-4);
  }
}
