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

#include "tlzmc/codec/model.hpp"
#include "tlzmc/eval/metrics.hpp"

namespace tlzmc {

// Four-phase training losses. Phase sub-step formulas:
//   phase 1:        D(x_bar, x)
//   phase 2 step 1: D(sr, x)                      (scalers only, no coding)
//   phase 2 step 2: D(ds_recon, ds_target) + R_b
//   phase 2 step 3: D(sr, x) + R_b
//   phase 3 step 1: D(cond, x)                    (merge + refine only)
//   phase 3 step 2: D(recon, x) + R_b + R_e       (skip coding inactive)
//   phase 3 step 3: D(recon, x) + R_b + R_e       (skip coding active)
//   phase 4:        lambda*D(recon, x) + epsilon*R_b + R_e + Aux
//     Aux = (D(y2, cond) + D(cond, x) + D(sr, x)) * 0.01 * lambda
// Rates enter in bits per pixel of the full-resolution frame for both
// layers. Distortion is MSE or 1 - MS-SSIM per the configured metric.

// Hyperparameters of one training run. The rate-distortion operating point
// (lambda, metric) mirrors the model's; keep them in sync via
// train_config_for.
struct TrainConfig {
  double lambda = 2048.0;
  double epsilon = 4.0;  // base-rate weight, phase 4 only
  Metric metric = Metric::kMse;
  double lr = 1e-4;
  int batch = 8;
  int intra_epochs = 3;               // anchor-compressor pretraining
  std::array<int, 4> epochs{5, 5, 5, 25};  // phases 1..4
  int crop = 256;                     // training crop, multiple of 64
  int val_every = 500;                // optimizer steps per validation round
  double plateau_factor = 0.5;        // lr scale on validation plateau
  int plateau_patience = 3;           // plateau length, validation rounds
  double skip_trigger = 0.01;         // <1% improvement twice -> activate skip
  uint64_t seed = 1;
  std::string checkpoint_dir;         // empty: no per-epoch checkpoint files
  std::ostream* log = nullptr;        // line-delimited step records
};

inline TrainConfig train_config_for(const ModelBundle& m) {
  TrainConfig c;
  c.lambda = m.lambda();
  c.metric = m.config().metric;
  c.seed = m.config().seed;
  return c;
}

// Everything a phase loss can consume. A phase/step only reads the fields
// its formula names; the rest may stay undefined.
template <typename T>
struct PhaseTensorsT {
  VarT<T> x;          // full-resolution target
  VarT<T> x_bar;      // interpolated frame
  VarT<T> sr;         // super-resolved base reconstruction
  VarT<T> ds_target;  // quarter-resolution target
  VarT<T> ds_recon;   // quarter-resolution reconstruction
  VarT<T> cond;       // merged conditioning frame x'
  VarT<T> recon;      // full-pipeline reconstruction
  VarT<T> y2;         // enhancement branch output
  VarT<T> rate_b;     // base-layer rate estimate, bits
  VarT<T> rate_e;     // enhancement-layer rate estimate, bits
  int64_t pixels = 0; // full-resolution pixel count (bpp denominator)
};

// Loss decomposition. The scalar fields are double-accumulated values for
// logging and tests; `total_var` is the graph-connected total to backprop.
template <typename T>
struct LossTermsT {
  double d = 0.0;     // distortion
  double r_b = 0.0;   // base rate, bpp
  double r_e = 0.0;   // enhancement rate, bpp
  double aux = 0.0;   // phase-4 regularizer
  double total = 0.0;
  VarT<T> total_var;
};

// MSE or 1 - MS-SSIM, per metric. Differentiable.
template <typename T>
VarT<T> distortion(Metric metric, const VarT<T>& a, const VarT<T>& b) {
  if (metric == Metric::kMse) return mse_loss(a, b);
  return add_scalar(neg(ms_ssim(a, b)), T(1));
}

namespace detail {

template <typename T>
const VarT<T>& need(const VarT<T>& v, const char* name) {
  check(v.defined(), std::string("loss: missing tensor ") + name);
  return v;
}

template <typename T>
double scalar_of(const VarT<T>& v) {
  return static_cast<double>(v.value()[0]);
}

}  // namespace detail

template <typename T>
LossTermsT<T> loss_phase(int phase, int step, const PhaseTensorsT<T>& t,
                         const TrainConfig& cfg) {
  check(phase >= 1 && phase <= 4, "loss: phase must be in 1..4");
  using detail::need;
  LossTermsT<T> out;

  auto bpp = [&](const VarT<T>& bits) {
    check(t.pixels > 0, "loss: missing pixel count");
    return mul_scalar(bits, static_cast<T>(1.0 / t.pixels));
  };

  VarT<T> d_var;
  switch (phase) {
    case 1:
      d_var = distortion(cfg.metric, need(t.x_bar, "x_bar"), need(t.x, "x"));
      break;
    case 2:
      check(step >= 1 && step <= 3, "loss: phase 2 has steps 1..3");
      d_var = step == 2 ? distortion(cfg.metric, need(t.ds_recon, "ds_recon"),
                                     need(t.ds_target, "ds_target"))
                        : distortion(cfg.metric, need(t.sr, "sr"),
                                     need(t.x, "x"));
      break;
    case 3:
      check(step >= 1 && step <= 3, "loss: phase 3 has steps 1..3");
      d_var = step == 1 ? distortion(cfg.metric, need(t.cond, "cond"),
                                     need(t.x, "x"))
                        : distortion(cfg.metric, need(t.recon, "recon"),
                                     need(t.x, "x"));
      break;
    default:
      d_var = distortion(cfg.metric, need(t.recon, "recon"), need(t.x, "x"));
      break;
  }
  out.d = detail::scalar_of(d_var);

  bool has_rb = phase == 4 || (phase == 2 && step >= 2) || phase == 3;
  bool has_re = phase == 4 || (phase == 3 && step >= 2);
  if (phase == 3 && step == 1) has_rb = false;

  VarT<T> rb_var, re_var;
  if (has_rb) {
    rb_var = bpp(need(t.rate_b, "rate_b"));
    out.r_b = detail::scalar_of(rb_var);
  }
  if (has_re) {
    re_var = bpp(need(t.rate_e, "rate_e"));
    out.r_e = detail::scalar_of(re_var);
  }

  if (phase < 4) {
    out.total_var = d_var;
    if (has_rb) out.total_var = add(out.total_var, rb_var);
    if (has_re) out.total_var = add(out.total_var, re_var);
    out.total = out.d + out.r_b + out.r_e;
    return out;
  }

  VarT<T> aux_var =
      add(add(distortion(cfg.metric, need(t.y2, "y2"), need(t.cond, "cond")),
              distortion(cfg.metric, t.cond, need(t.x, "x"))),
          distortion(cfg.metric, need(t.sr, "sr"), t.x));
  aux_var = mul_scalar(aux_var, static_cast<T>(0.01 * cfg.lambda));
  out.aux = detail::scalar_of(aux_var);

  out.total_var =
      add(add(mul_scalar(d_var, static_cast<T>(cfg.lambda)),
              mul_scalar(rb_var, static_cast<T>(cfg.epsilon))),
          add(re_var, aux_var));
  out.total = cfg.lambda * out.d + cfg.epsilon * out.r_b + out.r_e + out.aux;
  return out;
}

using PhaseTensors = PhaseTensorsT<float>;
using LossTerms = LossTermsT<float>;

}  // namespace tlzmc
