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

#include "tlzmc/data/dataset.hpp"
#include "tlzmc/eval/profile.hpp"
#include "tlzmc/eval/stats.hpp"

using namespace tlzmc;

namespace {

std::vector<Frame> synthetic_frames(uint64_t seed, int n, int h, int w) {
  TrainingClip clip = synthetic_clip(seed, h, w, n);
  std::vector<Frame> frames;
  frames.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) frames.push_back(make_frame(clip.frames[i], i));
  return frames;
}

const ModuleCost& row(const ComplexityReport& rep, const std::string& name) {
  for (const auto& m : rep.modules)
    if (m.name == name) return m;
  FAIL("missing module row " + name);
  return rep.modules.front();
}

}  // namespace

TEST_CASE("single-convolution MAC hand counts") {
  ParamStore ps;
  Rng rng(1);
  // 3x3, 1->1 channel, stride 1, 8x8 input: 8*8*9 = 576.
  Conv2dT<float> c1(ps, rng, "a", 1, 1, 3, 1, false, Init::kHe, false);
  REQUIRE(c1.macs(8, 8) == 576);
  // Stride 2 quarters the output grid and therefore the MACs.
  Conv2dT<float> c2(ps, rng, "b", 1, 1, 3, 2, false, Init::kHe, false);
  REQUIRE(c2.macs(8, 8) == 144);
  // Transposed convolutions count on the output grid: 16x16*9.
  Conv2dT<float> c3(ps, rng, "c", 1, 1, 3, 2, true, Init::kHe, false);
  REQUIRE(c3.macs(8, 8) == 16 * 16 * 9);
}

TEST_CASE("complexity report partitions the paper's three groups") {
  ModelBundle m(toy_config(21));
  ComplexityReport rep = profile_complexity(m, 128, 192);

  REQUIRE(rep.modules.size() == 7);
  std::vector<std::string> groups;
  for (const auto& mod : rep.modules)
    if (groups.empty() || groups.back() != mod.group)
      groups.push_back(mod.group);
  REQUIRE(groups == std::vector<std::string>{
                        "Frame Interpolator", "Base Layer",
                        "Enhancement Layer"});

  int64_t enc = 0, dec = 0, params = 0;
  for (const auto& mod : rep.modules) {
    REQUIRE(mod.params > 0);
    REQUIRE(mod.enc_macs > 0);
    REQUIRE(mod.dec_macs > 0);
    enc += mod.enc_macs;
    dec += mod.dec_macs;
    params += mod.params;
  }
  REQUIRE(enc == rep.enc_total());
  REQUIRE(dec == rep.dec_total());
  REQUIRE(params == rep.params_total());

  // Parameter rows tie out against the store, anchor included.
  REQUIRE(params + rep.intra_params == m.params().count_params(""));

  // Decode drops the analysis transforms; symmetric modules match exactly.
  REQUIRE(row(rep, "CANF").dec_macs < row(rep, "CANF").enc_macs);
  REQUIRE(row(rep, "Ad. CANF").dec_macs < row(rep, "Ad. CANF").enc_macs);
  REQUIRE(row(rep, "DS").enc_macs == 2 * row(rep, "DS").dec_macs);
  for (const char* name : {"Interp-Net", "SR-Net", "MFMN", "Skip Mask"})
    REQUIRE(row(rep, name).enc_macs == row(rep, name).dec_macs);

  // Per-pixel normalization uses the full-resolution frame.
  REQUIRE(rep.per_pixel(rep.enc_total()) ==
          Catch::Approx(static_cast<double>(enc) / (128.0 * 192.0)));

  REQUIRE_THROWS_WITH(profile_complexity(m, 100, 128),
                      Catch::Matchers::ContainsSubstring("multiple"));
}

TEST_CASE("complexity is independent of weight values") {
  ModelBundle a(toy_config(22)), b(toy_config(22));
  Rng rng(5);
  for (const auto& [name, v] : b.params().all())
    for (auto& x : v.mutable_value().data)
      x = static_cast<float>(rng.normal());
  ComplexityReport ra = profile_complexity(a, 128, 128);
  ComplexityReport rb = profile_complexity(b, 128, 128);
  REQUIRE(ra.modules.size() == rb.modules.size());
  for (size_t i = 0; i < ra.modules.size(); ++i) {
    REQUIRE(ra.modules[i].enc_macs == rb.modules[i].enc_macs);
    REQUIRE(ra.modules[i].dec_macs == rb.modules[i].dec_macs);
    REQUIRE(ra.modules[i].params == rb.modules[i].params);
  }
}

TEST_CASE("formatted table carries groups, rows and totals") {
  ModelBundle m(toy_config(23));
  std::string table = format_complexity(profile_complexity(m, 128, 128));
  for (const char* needle :
       {"Frame Interpolator", "Base Layer", "Enhancement Layer", "Interp-Net",
        "CANF", "DS", "SR-Net", "MFMN", "Skip Mask", "Ad. CANF", "Total",
        "Enc MACs/px", "Dec MACs/px"})
    REQUIRE(table.find(needle) != std::string::npos);
}

TEST_CASE("layer stats account every payload bit") {
  ModelBundle m(toy_config(24));
  auto frames = synthetic_frames(71, 5, 128, 128);
  CodedSequence enc = encode_sequence(m, frames, 4);

  LayerStats ls = layer_stats(enc.container, enc.stats);
  int64_t payload = 0;
  for (const auto& rec : enc.container.frames)
    for (const auto& s : rec.streams)
      payload += static_cast<int64_t>(s.size()) * 8;
  REQUIRE(ls.total_bits() == payload);
  REQUIRE(ls.intra_bits > 0);
  REQUIRE(ls.base_bits > 0);
  REQUIRE(ls.enh_bits > 0);
  REQUIRE(ls.base_fraction() > 0.0);
  REQUIRE(ls.base_fraction() < 1.0);

  // 5 frames at GOP 4: intra 0 and 4, one reference B, two non-reference.
  REQUIRE(ls.retained.size() == 3);
  // Untrained skip head transmits everything.
  REQUIRE(ls.retained_mean == 1.0);
  REQUIRE(ls.retained_ref == 1.0);
  REQUIRE(ls.retained_nonref == 1.0);

  auto broken = enc.stats;
  broken.pop_back();
  REQUIRE_THROWS_WITH(layer_stats(enc.container, broken),
                      Catch::Matchers::ContainsSubstring("count mismatch"));
}

TEST_CASE("all-intra stream has no layer split") {
  ModelBundle m(toy_config(25));
  auto frames = synthetic_frames(72, 1, 64, 64);
  CodedSequence enc = encode_sequence(m, frames, 8);
  LayerStats ls = layer_stats(enc.container, enc.stats);
  REQUIRE(ls.base_bits == 0);
  REQUIRE(ls.enh_bits == 0);
  REQUIRE(ls.intra_bits > 0);
  REQUIRE(ls.retained_mean == -1.0);
  REQUIRE(ls.base_fraction() == 0.0);
}

TEST_CASE("per-frame stats CSV") {
  ModelBundle m(toy_config(26));
  auto frames = synthetic_frames(73, 3, 64, 64);
  CodedSequence enc = encode_sequence(m, frames, 4);
  std::string csv = stats_csv(enc.stats);
  REQUIRE(csv.find("poc,type,bits,base_bits,enh_bits,retained\n") == 0);
  REQUIRE(csv.find("0,I,") != std::string::npos);
  REQUIRE(csv.find(",B,") != std::string::npos);
  // Intra rows leave the retained column empty.
  REQUIRE(csv.find(",0,0,\n") != std::string::npos);
}
