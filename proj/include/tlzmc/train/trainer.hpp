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

#include <cmath>
#include <sstream>

#include "tlzmc/core/adam.hpp"
#include "tlzmc/data/dataset.hpp"
#include "tlzmc/train/loss.hpp"

namespace tlzmc {

// Phase-by-phase training orchestration.
//
// Phase 0 pretrains the intra compressor (the GOP anchor; trained once per
// operating point and frozen afterwards, since the B-frame phases never
// route gradients through it). Phases 1-4 follow the staged schedule:
//   1: interpolator alone.
//   2: base layer; sub-steps train (scalers) -> (base CANF) -> (everything
//      in the base path including the interpolator).
//   3: base path frozen; sub-steps train (merge + refine) -> (+ enhancement
//      CANF, skip coding off) -> (+ skip generator, skip coding on). The
//      final sub-step starts early once no-skip validation improves < 1%
//      over two consecutive rounds.
//   4: everything end-to-end under the lambda-weighted loss.
//
// Sub-steps split a phase's step budget evenly (remainder to the last);
// each starts a fresh ADAM at the configured base rate. Validation runs
// every `val_every` optimizer steps on the held-out split; a plateau
// (no new best for `plateau_patience` rounds) halves the learning rate.

struct PhaseReport {
  int phase = 0;
  int steps = 0;                     // optimizer steps taken
  std::vector<double> loss_history;  // training loss per step
  std::vector<double> val_history;   // every validation round, in order
  double first_val = 0.0;            // before any update of this phase
  double best_val = 0.0;             // best round of the final sub-step
  double final_lr = 0.0;
  int skip_activated_at = -1;        // phase 3: step index, -1 if by budget
};

namespace detail {

// Deterministic held-out split: every tenth clip validates (at least one).
inline void split_clips(int n, std::vector<int>& train_idx,
                        std::vector<int>& val_idx) {
  check(n >= 2, "training needs at least 2 clips");
  for (int i = 0; i < n; ++i)
    ((i + 1) % 10 == 0 ? val_idx : train_idx).push_back(i);
  if (val_idx.empty()) {
    val_idx.push_back(train_idx.back());
    train_idx.pop_back();
  }
}

inline void shuffle(std::vector<int>& v, Rng& rng) {
  for (int i = static_cast<int>(v.size()) - 1; i > 0; --i)
    std::swap(v[static_cast<size_t>(i)],
              v[static_cast<size_t>(rng.uniform_int(i + 1))]);
}

// Endless pass over the training indices, reshuffled each epoch.
struct ClipSampler {
  std::vector<int> idx;
  size_t pos = 0;
  int next(Rng& rng) {
    if (pos == idx.size()) {
      shuffle(idx, rng);
      pos = 0;
    }
    return idx[pos++];
  }
};

// Shared center crop to the training size; validation uses no flips so
// rounds stay comparable across the run.
inline TrainingClip center_crop(const TrainingClip& clip, int crop) {
  int h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  check(h >= crop && w >= crop, "validation clip smaller than crop size");
  int y0 = (h - crop) / 2, x0 = (w - crop) / 2;
  TrainingClip out;
  for (const auto& f : clip.frames) {
    Tensor t({3, crop, crop});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x) t.at(c, y, x) = f.at(c, y0 + y, x0 + x);
    out.frames.push_back(std::move(t));
  }
  return out;
}

// Trainable set per phase / sub-step; everything else is frozen, which both
// blocks optimizer updates and keeps frozen branches out of the backward
// graph.
inline void apply_freeze(ParamStore& ps, int phase, int step) {
  ps.set_all_trainable(false);
  switch (phase) {
    case 0:
      ps.set_trainable("intra", true);
      break;
    case 1:
      ps.set_trainable("interp", true);
      break;
    case 2:
      if (step == 1) {
        ps.set_trainable("base.ds", true);
        ps.set_trainable("base.sr", true);
      } else if (step == 2) {
        ps.set_trainable("base.canf", true);
      } else {
        ps.set_trainable("interp", true);
        ps.set_trainable("base", true);
      }
      break;
    case 3:
      ps.set_trainable("enh.merge", true);
      ps.set_trainable("enh.refine", true);
      if (step >= 2) ps.set_trainable("enh.canf", true);
      if (step >= 3) ps.set_trainable("enh.skip", true);
      break;
    default:
      ps.set_trainable("interp", true);
      ps.set_trainable("base", true);
      ps.set_trainable("enh", true);
      break;
  }
}

// Runs the pipeline as far as the phase needs and collects the loss inputs.
inline PhaseTensors build_tensors(const ModelBundle& m, int phase, int step,
                                  const Triplet& tri, CodeMode mode,
                                  Rng* noise) {
  PhaseTensors t;
  Var x = Var::constant(tri.target);
  t.x = x;
  t.pixels = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  if (phase == 2 && step == 1) {  // scalers alone, no coding loop
    t.sr = m.base().super_resolve(m.base().downsample(x));
    return t;
  }
  Var p = Var::constant(tri.prev), n = Var::constant(tri.next);
  int fa = tri.non_ref ? kFaNonRef : kFaRef;
  InterpResult ir = m.interp()(p, n);
  t.x_bar = ir.interpolated;
  if (phase == 1) return t;

  BaseCode bc = m.base().code(x, ir.interpolated, fa, mode, noise);
  t.ds_target = bc.ds_target;
  t.ds_recon = bc.code.recon;
  t.sr = bc.sr_frame;
  t.rate_b = bc.code.rate_bits;
  if (phase == 2) return t;

  Var wp = warp_bilinear(p, ir.flow_prev);
  Var wn = warp_bilinear(n, ir.flow_next);
  MergeOut mo = m.enh().merge(bc.sr_frame, wp, wn);
  t.cond = mo.cond;
  if (phase == 3 && step == 1) return t;

  bool use_skip = phase == 4 || step >= 3;
  CanfCode ec = m.enh().code(x, mo.cond, ir.flow_prev, ir.flow_next, fa, mode,
                             noise, use_skip);
  t.recon = ec.recon;
  t.y2 = ec.y2;
  t.rate_e = ec.rate_bits;
  return t;
}

// One sample's loss. Phase 0 is the anchor pretrain:
// lambda * D(recon, x) + bpp, logged with the rate in r_e.
inline LossTerms sample_loss(const ModelBundle& m, int phase, int step,
                             const Triplet& tri, const TrainConfig& cfg,
                             CodeMode mode, Rng* noise) {
  if (phase == 0) {
    Var x = Var::constant(tri.target);
    CanfCode code = intra_code(m.intra(), x, mode, noise);
    LossTerms lt;
    Var d = distortion(cfg.metric, code.recon, x);
    double px = static_cast<double>(x.dim(1)) * x.dim(2);
    Var r = mul_scalar(code.rate_bits, static_cast<float>(1.0 / px));
    lt.d = static_cast<double>(d.value()[0]);
    lt.r_e = static_cast<double>(r.value()[0]);
    lt.total_var = add(mul_scalar(d, static_cast<float>(cfg.lambda)), r);
    lt.total = cfg.lambda * lt.d + lt.r_e;
    return lt;
  }
  PhaseTensors t = build_tensors(m, phase, step, tri, mode, noise);
  return loss_phase(phase, step, t, cfg);
}

// Deterministic validation pass: rounded latents, no noise, no flips,
// temporal distance cycling through {1,2,3}.
inline double validate(const ModelBundle& m, int phase, int step,
                       const TrainConfig& cfg,
                       const std::vector<TrainingClip>& clips,
                       const std::vector<int>& val_idx) {
  NoGradGuard ng;
  double total = 0.0;
  for (size_t i = 0; i < val_idx.size(); ++i) {
    TrainingClip c = center_crop(clips[static_cast<size_t>(val_idx[i])],
                                 cfg.crop);
    Triplet tri = triplet_sampler(c, 1 + static_cast<int>(i % 3));
    total +=
        sample_loss(m, phase, step, tri, cfg, CodeMode::kEstimate, nullptr)
            .total;
  }
  return total / static_cast<double>(val_idx.size());
}

inline void log_line(const TrainConfig& cfg, const std::string& s) {
  if (cfg.log) *cfg.log << s << "\n";
}

}  // namespace detail

// Trains one phase in place and reports the trajectory. Deterministic for a
// given (config, model, dataset). Phases 2..4 require the previous phase in
// the model's lineage.
inline PhaseReport run_phase(int phase, const TrainConfig& cfg,
                             ModelBundle& model,
                             const std::vector<TrainingClip>& clips) {
  check(phase >= 0 && phase <= 4, "run_phase: phase must be in 0..4");
  check(cfg.batch >= 1, "run_phase: batch must be positive");
  check(cfg.crop % 64 == 0 && cfg.crop > 0,
        "run_phase: crop must be a positive multiple of 64");
  if (phase >= 2)
    check(model.lineage().find("phase" + std::to_string(phase - 1)) !=
              std::string::npos,
          "run_phase: phase " + std::to_string(phase - 1) +
              " missing from lineage");

  std::vector<int> train_idx, val_idx;
  detail::split_clips(static_cast<int>(clips.size()), train_idx, val_idx);
  int spe = (static_cast<int>(train_idx.size()) + cfg.batch - 1) / cfg.batch;
  int phase_epochs =
      phase == 0 ? cfg.intra_epochs : cfg.epochs[static_cast<size_t>(phase - 1)];
  check(phase_epochs >= 1, "run_phase: phase epoch budget must be positive");
  int total_steps = phase_epochs * spe;
  int n_sub = (phase == 2 || phase == 3) ? 3 : 1;

  Rng rng(cfg.seed * 0x9e3779b97f4a7c15ull + static_cast<uint64_t>(phase));
  Rng noise(rng.next_u64());
  detail::ClipSampler sampler{train_idx};
  detail::shuffle(sampler.idx, rng);

  PhaseReport rep;
  rep.phase = phase;
  int lowgain = 0;  // consecutive low-improvement validation rounds
  int done = 0;

  for (int sub = 1; sub <= n_sub; ++sub) {
    int budget = sub == n_sub ? total_steps - done
                              : total_steps / n_sub;
    if (budget <= 0) continue;
    int step_id = n_sub == 1 ? 1 : sub;
    detail::apply_freeze(model.params(), phase, step_id);
    Adam opt(model.params(), cfg.lr);

    double val = detail::validate(model, phase, step_id, cfg, clips, val_idx);
    if (rep.val_history.empty()) rep.first_val = val;
    rep.val_history.push_back(val);
    detail::log_line(cfg, "phase=" + std::to_string(phase) +
                              " step=" + std::to_string(step_id) +
                              " opt=" + std::to_string(done) +
                              " val=" + std::to_string(val));
    double best = val, prev = val;
    rep.best_val = val;
    int stale = 0;
    lowgain = 0;

    for (int s = 0; s < budget; ++s) {
      model.params().zero_grads();
      LossTerms avg;
      for (int b = 0; b < cfg.batch; ++b) {
        int ci = sampler.next(rng);
        TrainingClip c =
            augment(clips[static_cast<size_t>(ci)], rng.next_u64(), cfg.crop);
        Triplet tri = triplet_sampler(c, 1 + rng.uniform_int(3));
        LossTerms lt = detail::sample_loss(model, phase, step_id, tri, cfg,
                                           CodeMode::kTrain, &noise);
        check(std::isfinite(lt.total), "training diverged: non-finite loss");
        mul_scalar(lt.total_var, 1.0f / static_cast<float>(cfg.batch))
            .backward();
        avg.d += lt.d / cfg.batch;
        avg.r_b += lt.r_b / cfg.batch;
        avg.r_e += lt.r_e / cfg.batch;
        avg.aux += lt.aux / cfg.batch;
        avg.total += lt.total / cfg.batch;
      }
      opt.step();
      ++done;
      rep.loss_history.push_back(avg.total);
      {
        std::ostringstream os;
        os << "phase=" << phase << " step=" << step_id << " opt=" << done
           << " d=" << avg.d << " r_b=" << avg.r_b << " r_e=" << avg.r_e
           << " aux=" << avg.aux << " total=" << avg.total
           << " lr=" << opt.lr();
        detail::log_line(cfg, os.str());
      }
      if (!cfg.checkpoint_dir.empty() && done % spe == 0)
        model.save(cfg.checkpoint_dir + "/phase" + std::to_string(phase) +
                   "_epoch" + std::to_string(done / spe) + ".tlzw");

      if (done % cfg.val_every == 0 || s == budget - 1) {
        val = detail::validate(model, phase, step_id, cfg, clips, val_idx);
        rep.val_history.push_back(val);
        if (val < best) {
          best = val;
          stale = 0;
        } else if (++stale >= cfg.plateau_patience) {
          opt.set_lr(opt.lr() * cfg.plateau_factor);
          stale = 0;
        }
        rep.best_val = best;
        detail::log_line(cfg, "phase=" + std::to_string(phase) +
                                  " step=" + std::to_string(step_id) +
                                  " opt=" + std::to_string(done) +
                                  " val=" + std::to_string(val) +
                                  " lr=" + std::to_string(opt.lr()));
        // The skip generator joins once no-skip training converges.
        if (phase == 3 && step_id == 2) {
          double improve = prev > 0 ? (prev - val) / prev : 0.0;
          lowgain = improve < cfg.skip_trigger ? lowgain + 1 : 0;
          if (lowgain >= 2) {
            prev = val;
            rep.skip_activated_at = done;
            break;
          }
        }
        prev = val;
      }
    }
    rep.final_lr = opt.lr();
  }
  rep.steps = done;
  model.params().set_all_trainable(true);
  model.append_lineage("phase" + std::to_string(phase) +
                       ":steps=" + std::to_string(done));
  return rep;
}

// Full schedule: anchor pretrain, then the four phases.
inline std::vector<PhaseReport> train_full(
    const TrainConfig& cfg, ModelBundle& model,
    const std::vector<TrainingClip>& clips) {
  std::vector<PhaseReport> reports;
  for (int phase = 0; phase <= 4; ++phase)
    reports.push_back(run_phase(phase, cfg, model, clips));
  return reports;
}

// Derives one rate point from the fully trained top-rate model: deep-copies
// the weights, swaps the operating point, and runs five epochs of phase 4.
// Phases 1-3 are never revisited.
inline ModelBundle finetune_rate_point(const ModelBundle& model_high,
                                       int lambda_index, TrainConfig cfg,
                                       const std::vector<TrainingClip>& clips,
                                       int epochs = 5) {
  check(model_high.lineage().find("phase4") != std::string::npos,
        "finetune: model is not fully trained");
  ModelBundle m = ModelBundle::deserialize(model_high.serialize());
  m.config().lambda_index = lambda_index;
  m.append_lineage("finetune:lambda_index=" + std::to_string(lambda_index));
  cfg.lambda = lambda_value(m.config().metric, lambda_index);
  cfg.epochs[3] = epochs;
  run_phase(4, cfg, m, clips);
  return m;
}

}  // namespace tlzmc
