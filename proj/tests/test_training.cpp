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

#include <cmath>
#include <filesystem>
#include <limits>

#include <catch2/catch_amalgamated.hpp>

#include "tlzmc/train/trainer.hpp"

using namespace tlzmc;

namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("tlzmc_test_" + tag);
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

using DVar = VarT<double>;
using DTensor = TensorT<double>;

// Rank-1 scalar constant.
DVar dscalar(double v) {
  DTensor t({1});
  t[0] = v;
  return DVar::constant(std::move(t));
}

// Constant (3,4,4) image filled with v.
DVar dimage(double v) {
  DTensor t({3, 4, 4});
  for (auto& x : t.data) x = v;
  return DVar::constant(std::move(t));
}

std::vector<TrainingClip> toy_clips(uint64_t seed, int n) {
  std::vector<TrainingClip> clips;
  clips.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i)
    clips.push_back(synthetic_clip(seed + static_cast<uint64_t>(i)));
  return clips;
}

TrainConfig toy_train_config() {
  TrainConfig cfg;
  cfg.crop = 64;
  cfg.batch = 2;
  cfg.intra_epochs = 1;
  cfg.epochs = {1, 1, 1, 1};
  cfg.val_every = 1000;  // baseline + end-of-sub-step rounds only
  cfg.seed = 5;
  return cfg;
}

double grad_abs_sum(const ParamStore& ps, const std::string& prefix) {
  double total = 0.0;
  for (const auto& [name, v] : ps.all()) {
    if (name.rfind(prefix, 0) != 0) continue;
    const auto& g = v.grad();
    for (int64_t i = 0; i < g.numel(); ++i)
      total += std::abs(static_cast<double>(g[i]));
  }
  return total;
}

bool snapshots_equal(const std::map<std::string, Tensor>& a,
                     const std::map<std::string, Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a) {
    auto it = b.find(name);
    if (it == b.end() || !t.same_shape(it->second)) return false;
    for (int64_t i = 0; i < t.numel(); ++i)
      if (t[i] != it->second[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("loss formulas match hand-computed values") {
  TrainConfig cfg;
  cfg.lambda = 2048.0;
  cfg.epsilon = 4.0;
  cfg.metric = Metric::kMse;

  // Distinct constant offsets so every term is visible in the total.
  double ca = 0.02, cb = 0.05, cc = 0.03, cd = 0.04, ce = 0.01;
  PhaseTensorsT<double> t;
  t.x = dimage(0.5);
  t.x_bar = dimage(0.5 + ca);
  t.sr = dimage(0.5 + cb);
  t.ds_target = dimage(0.25);
  t.ds_recon = dimage(0.25 + cc);
  t.cond = dimage(0.5 + cd);
  t.recon = dimage(0.5 + ce);
  t.y2 = dimage(0.5 + cd + ca);  // D(y2, cond) = ca^2
  t.rate_b = dscalar(3.0);
  t.rate_e = dscalar(17.0);
  t.pixels = 100;
  double rb = 0.03, re = 0.17;

  auto total_of = [&](int phase, int step) {
    return loss_phase(phase, step, t, cfg).total;
  };
  REQUIRE(total_of(1, 1) == Catch::Approx(ca * ca).epsilon(1e-9));
  REQUIRE(total_of(2, 1) == Catch::Approx(cb * cb).epsilon(1e-9));
  REQUIRE(total_of(2, 2) == Catch::Approx(cc * cc + rb).epsilon(1e-9));
  REQUIRE(total_of(2, 3) == Catch::Approx(cb * cb + rb).epsilon(1e-9));
  REQUIRE(total_of(3, 1) == Catch::Approx(cd * cd).epsilon(1e-9));
  REQUIRE(total_of(3, 2) == Catch::Approx(ce * ce + rb + re).epsilon(1e-9));
  REQUIRE(total_of(3, 3) == Catch::Approx(ce * ce + rb + re).epsilon(1e-9));

  LossTermsT<double> p4 = loss_phase(4, 1, t, cfg);
  double aux = (ca * ca + cd * cd + cb * cb) * 0.01 * cfg.lambda;
  REQUIRE(p4.aux == Catch::Approx(aux).epsilon(1e-9));
  REQUIRE(p4.total ==
          Catch::Approx(2048.0 * ce * ce + 4.0 * rb + re + aux).epsilon(1e-9));
  // The struct decomposition recomposes to the formula exactly.
  REQUIRE(p4.total == Catch::Approx(cfg.lambda * p4.d + cfg.epsilon * p4.r_b +
                                    p4.r_e + p4.aux)
                          .epsilon(1e-12));
  // The graph total agrees with the double accumulation.
  REQUIRE(static_cast<double>(p4.total_var.value()[0]) ==
          Catch::Approx(p4.total).epsilon(1e-12));
}

TEST_CASE("phase-4 frozen oracle: components 0.001/0.01/0.1 at lambda 2048") {
  TrainConfig cfg;
  cfg.lambda = 2048.0;
  cfg.epsilon = 4.0;

  double c = std::sqrt(0.001);  // constant offset with MSE 0.001
  PhaseTensorsT<double> t;
  t.x = dimage(0.4);
  t.recon = dimage(0.4 + c);
  t.sr = dimage(0.4 + c);
  t.cond = dimage(0.4 + c);
  t.y2 = dimage(0.4 + 2 * c);  // D(y2, cond) = c^2
  t.rate_b = dscalar(1.0);     // 0.01 bpp over 100 pixels
  t.rate_e = dscalar(10.0);    // 0.10 bpp
  t.pixels = 100;

  LossTermsT<double> lt = loss_phase(4, 1, t, cfg);
  REQUIRE(lt.d == Catch::Approx(0.001).epsilon(1e-12));
  REQUIRE(lt.r_b == Catch::Approx(0.01).epsilon(1e-12));
  REQUIRE(lt.r_e == Catch::Approx(0.1).epsilon(1e-12));
  REQUIRE(lt.aux == Catch::Approx(0.06144).epsilon(1e-9));
  REQUIRE(lt.total == Catch::Approx(2.24944).epsilon(1e-9));

  // All-zero components collapse the total to zero.
  PhaseTensorsT<double> z;
  z.x = dimage(0.4);
  z.recon = z.x;
  z.sr = z.x;
  z.cond = z.x;
  z.y2 = z.x;
  z.rate_b = dscalar(0.0);
  z.rate_e = dscalar(0.0);
  z.pixels = 100;
  REQUIRE(loss_phase(4, 1, z, cfg).total == 0.0);
}

TEST_CASE("loss rejects missing tensors and bad phases") {
  TrainConfig cfg;
  PhaseTensorsT<double> t;
  t.x = dimage(0.5);
  t.pixels = 16;
  REQUIRE_THROWS_WITH(loss_phase(1, 1, t, cfg),
                      Catch::Matchers::ContainsSubstring("missing tensor"));
  t.x_bar = dimage(0.5);
  REQUIRE_NOTHROW(loss_phase(1, 1, t, cfg));
  REQUIRE_THROWS_WITH(loss_phase(4, 1, t, cfg),
                      Catch::Matchers::ContainsSubstring("missing tensor"));
  REQUIRE_THROWS(loss_phase(0, 1, t, cfg));
  REQUIRE_THROWS(loss_phase(5, 1, t, cfg));
  // Rates require the bpp denominator.
  t.sr = dimage(0.5);
  t.rate_b = dscalar(1.0);
  t.pixels = 0;
  REQUIRE_THROWS_WITH(loss_phase(2, 3, t, cfg),
                      Catch::Matchers::ContainsSubstring("pixel count"));
}

TEST_CASE("ms-ssim distortion mode is 1 - ms-ssim") {
  TrainConfig cfg;
  cfg.metric = Metric::kMsSsim;
  Rng rng(41);
  DTensor a({3, 160, 160}), b;
  for (auto& v : a.data) v = rng.uniform(0.2, 0.8);
  b = a;
  for (auto& v : b.data) v = std::min(1.0, std::max(0.0, v + rng.normal() * 0.02));

  DVar va = DVar::constant(a), vb = DVar::constant(b);
  double d = static_cast<double>(
      distortion(Metric::kMsSsim, va, vb).value()[0]);
  REQUIRE(d == Catch::Approx(1.0 - ms_ssim_value(a, b)).margin(1e-12));
  REQUIRE(d > 0.0);
  REQUIRE(d < 1.0);
  REQUIRE(static_cast<double>(
              distortion(Metric::kMsSsim, va, va).value()[0]) ==
          Catch::Approx(0.0).margin(1e-9));
}

TEST_CASE("phase 2 step 2 sends no gradient into the enhancement layer") {
  ModelBundle m(toy_config(11));
  auto clips = toy_clips(300, 2);
  Triplet tri = triplet_sampler(clips[0], 2);
  TrainConfig cfg = toy_train_config();
  Rng noise(7);

  m.params().zero_grads();
  PhaseTensors t =
      detail::build_tensors(m, 2, 2, tri, CodeMode::kTrain, &noise);
  loss_phase(2, 2, t, cfg).total_var.backward();
  REQUIRE(grad_abs_sum(m.params(), "enh.") == 0.0);
  REQUIRE(grad_abs_sum(m.params(), "base.canf") > 0.0);
}

TEST_CASE("straight-through gradient reaches the skip generator") {
  ModelBundle m(toy_config(12));
  // Off-identity weights so the mask probabilities sit away from 1/2.
  Rng rng(13);
  for (const auto& [name, v] : m.params().all()) {
    if (name.find(".fa_") != std::string::npos) continue;
    for (auto& x : v.mutable_value().data)
      x += static_cast<float>(rng.normal() * 0.02);
  }
  auto clips = toy_clips(310, 2);
  Triplet tri = triplet_sampler(clips[0], 1);
  TrainConfig cfg = toy_train_config();
  Rng noise(8);

  m.params().zero_grads();
  PhaseTensors t =
      detail::build_tensors(m, 4, 1, tri, CodeMode::kTrain, &noise);
  loss_phase(4, 1, t, cfg).total_var.backward();
  REQUIRE(grad_abs_sum(m.params(), "enh.skip") > 0.0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  auto clips = toy_clips(320, 6);
  TrainConfig cfg = toy_train_config();
  cfg.epochs[0] = 4;  // 5 train clips, batch 2 -> 3 steps/epoch -> 12 steps

  ModelBundle a(toy_config(3)), b(toy_config(3));
  PhaseReport ra = run_phase(1, cfg, a, clips);
  PhaseReport rb = run_phase(1, cfg, b, clips);
  REQUIRE(ra.steps == 12);
  REQUIRE(ra.loss_history.size() == rb.loss_history.size());
  for (size_t i = 0; i < ra.loss_history.size(); ++i)
    REQUIRE(ra.loss_history[i] == rb.loss_history[i]);
  REQUIRE(ra.first_val == rb.first_val);
}

TEST_CASE("phase 3 freezes the base path bit-exactly") {
  ModelBundle m(toy_config(14));
  m.append_lineage("phase1:steps=0");
  m.append_lineage("phase2:steps=0");
  auto clips = toy_clips(330, 4);
  TrainConfig cfg = toy_train_config();
  cfg.batch = 1;

  auto base_before = m.params().snapshot("base");
  auto interp_before = m.params().snapshot("interp");
  auto intra_before = m.params().snapshot("intra");
  PhaseReport rep = run_phase(3, cfg, m, clips);
  REQUIRE(rep.steps == 3);  // 3 train clips, batch 1, 1 epoch
  REQUIRE(snapshots_equal(base_before, m.params().snapshot("base")));
  REQUIRE(snapshots_equal(interp_before, m.params().snapshot("interp")));
  REQUIRE(snapshots_equal(intra_before, m.params().snapshot("intra")));
  REQUIRE(m.lineage().find("phase3") != std::string::npos);
  // Merge weights did move.
  REQUIRE_FALSE(snapshots_equal(m.params().snapshot("enh.merge"),
                                ModelBundle(toy_config(14))
                                    .params()
                                    .snapshot("enh.merge")));
}

TEST_CASE("phase prerequisites and divergence guard") {
  ModelBundle m(toy_config(15));
  auto clips = toy_clips(340, 4);
  TrainConfig cfg = toy_train_config();
  REQUIRE_THROWS_WITH(run_phase(3, cfg, m, clips),
                      Catch::Matchers::ContainsSubstring("lineage"));

  auto bad = toy_clips(350, 2);
  for (auto& clip : bad)
    clip.frames[3].at(0, 0, 0) = std::numeric_limits<float>::quiet_NaN();
  cfg.batch = 1;
  REQUIRE_THROWS_WITH(run_phase(1, cfg, m, bad),
                      Catch::Matchers::ContainsSubstring("diverged"));
}

TEST_CASE("skip activation trigger hands the budget to the final sub-step") {
  auto clips = toy_clips(360, 4);
  TrainConfig cfg = toy_train_config();
  cfg.batch = 1;
  cfg.epochs[2] = 3;  // 9 steps total across the three sub-steps
  cfg.val_every = 1;

  // Trigger threshold so large every round counts as converged: the no-skip
  // sub-step ends after its second validation round.
  cfg.skip_trigger = 1e9;
  ModelBundle m(toy_config(16));
  m.append_lineage("phase1:steps=0;phase2:steps=0");
  PhaseReport rep = run_phase(3, cfg, m, clips);
  REQUIRE(rep.skip_activated_at == 5);  // sub-step 2 broke at its 2nd round
  REQUIRE(rep.steps == 9);              // remainder rolled into sub-step 3

  // Impossible threshold: the trigger never fires.
  cfg.skip_trigger = -1.0;
  ModelBundle m2(toy_config(16));
  m2.append_lineage("phase1:steps=0;phase2:steps=0");
  PhaseReport rep2 = run_phase(3, cfg, m2, clips);
  REQUIRE(rep2.skip_activated_at == -1);
  REQUIRE(rep2.steps == 9);
}

TEST_CASE("anchor pretraining and checkpoints") {
  TempDir dir("train_ckpt");
  auto clips = toy_clips(370, 4);
  TrainConfig cfg = toy_train_config();
  cfg.batch = 1;
  cfg.checkpoint_dir = dir.path.string();

  ModelBundle m(toy_config(17));
  PhaseReport rep = run_phase(0, cfg, m, clips);
  REQUIRE(rep.steps == 3);
  REQUIRE(m.lineage().find("phase0") != std::string::npos);
  fs::path ck = dir.path / "phase0_epoch1.tlzw";
  REQUIRE(fs::exists(ck));
  ModelBundle loaded = ModelBundle::load(ck.string());
  REQUIRE(loaded.config() == m.config());
}

TEST_CASE("rate-point fine-tuning keeps the protocol") {
  auto clips = toy_clips(380, 4);
  TrainConfig cfg = toy_train_config();
  cfg.batch = 1;

  ModelBundle m(toy_config(18));
  m.config().lambda_index = 3;
  REQUIRE_THROWS_WITH(finetune_rate_point(m, 0, cfg, clips, 1),
                      Catch::Matchers::ContainsSubstring("not fully trained"));

  m.append_lineage("phase1:a;phase2:b;phase3:c;phase4:d");
  ModelBundle ft = finetune_rate_point(m, 0, cfg, clips, 1);
  REQUIRE(ft.config().lambda_index == 0);
  REQUIRE(ft.lineage().find("finetune:lambda_index=0") != std::string::npos);
  // Source model untouched.
  REQUIRE(m.config().lambda_index == 3);
  REQUIRE(m.lineage().find("finetune") == std::string::npos);
}

TEST_CASE("short interpolator run learns on synthetic motion") {
  auto clips = toy_clips(390, 24);
  TrainConfig cfg = toy_train_config();
  cfg.batch = 4;
  cfg.epochs[0] = 10;  // 22 train clips, batch 4 -> 6 steps/epoch -> 60 steps

  ModelBundle m(toy_config(19));
  PhaseReport rep = run_phase(1, cfg, m, clips);
  REQUIRE(rep.steps == 60);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 5; ++i) {
    head += rep.loss_history[static_cast<size_t>(i)] / 5.0;
    tail += rep.loss_history[rep.loss_history.size() - 1 -
                             static_cast<size_t>(i)] /
            5.0;
  }
  REQUIRE(tail < 0.9 * head);
  REQUIRE(rep.best_val <= rep.first_val);
}
