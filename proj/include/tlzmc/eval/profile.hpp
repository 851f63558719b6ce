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

#include <iomanip>
#include <sstream>

#include "tlzmc/codec/model.hpp"
#include "tlzmc/data/frame.hpp"

namespace tlzmc {

// Analytic complexity accounting for coding one B frame at a given
// resolution: every (transposed) convolution contributes
// out_h * out_w * c_out * c_in * k * k multiply-accumulates; elementwise ops
// are excluded. Encode covers the full closed loop the encoder actually
// runs (analysis + synthesis); decode drops the analysis transforms but
// keeps skip-mask regeneration. A pure function of architecture and frame
// size - weight values never enter.

struct ModuleCost {
  std::string group;  // breakdown section
  std::string name;   // row label
  int64_t params = 0;
  int64_t enc_macs = 0;
  int64_t dec_macs = 0;
};

struct ComplexityReport {
  int h = 0, w = 0;
  std::vector<ModuleCost> modules;
  int64_t intra_params = 0;  // GOP anchor compressor, outside the B path

  int64_t params_total() const {
    int64_t t = 0;
    for (const auto& m : modules) t += m.params;
    return t;
  }
  int64_t enc_total() const {
    int64_t t = 0;
    for (const auto& m : modules) t += m.enc_macs;
    return t;
  }
  int64_t dec_total() const {
    int64_t t = 0;
    for (const auto& m : modules) t += m.dec_macs;
    return t;
  }
  double per_pixel(int64_t macs) const {
    return static_cast<double>(macs) / (static_cast<double>(h) * w);
  }
};

inline ComplexityReport profile_complexity(const ModelBundle& m, int h,
                                           int w) {
  check(h > 0 && w > 0 && h % kPadMultiple == 0 && w % kPadMultiple == 0,
        "profile: frame size must be a positive multiple of " +
            std::to_string(kPadMultiple));
  const auto& ps = m.params();
  const auto& bc = m.base().compressor();
  const auto& ec = m.enh().compressor();
  int qh = h / 4, qw = w / 4;

  ComplexityReport rep;
  rep.h = h;
  rep.w = w;
  rep.intra_params = ps.count_params("intra");

  int64_t interp = m.interp().macs(h, w);
  rep.modules.push_back(
      {"Frame Interpolator", "Interp-Net", ps.count_params("interp"), interp,
       interp});

  // Base coding runs at quarter resolution. The encoder downsamples both
  // the target and the condition; the decoder only the condition.
  int64_t b_enc = bc.macs_flow_forward(qh, qw) + bc.macs_flow_inverse(qh, qw) +
                  bc.macs_hyper_analysis(qh, qw) +
                  bc.macs_hyper_synthesis(qh, qw);
  int64_t b_dec = bc.macs_flow_inverse(qh, qw) + bc.macs_hyper_synthesis(qh, qw);
  rep.modules.push_back(
      {"Base Layer", "CANF", ps.count_params("base.canf"), b_enc, b_dec});
  rep.modules.push_back({"Base Layer", "DS", ps.count_params("base.ds"),
                         2 * m.base().macs_downsample(h, w),
                         m.base().macs_downsample(h, w)});
  rep.modules.push_back({"Base Layer", "SR-Net", ps.count_params("base.sr"),
                         m.base().macs_super_resolve(h, w),
                         m.base().macs_super_resolve(h, w)});
  int64_t mfmn = m.enh().macs_merge(h, w) + m.enh().macs_refine(h, w);
  rep.modules.push_back(
      {"Base Layer", "MFMN",
       ps.count_params("enh.merge") + ps.count_params("enh.refine"), mfmn,
       mfmn});

  int64_t skip = m.enh().macs_skip(h, w);
  rep.modules.push_back(
      {"Enhancement Layer", "Skip Mask", ps.count_params("enh.skip"), skip,
       skip});
  int64_t e_enc = ec.macs_flow_forward(h, w) + ec.macs_flow_inverse(h, w) +
                  ec.macs_hyper_analysis(h, w) + ec.macs_hyper_synthesis(h, w);
  int64_t e_dec = ec.macs_flow_inverse(h, w) + ec.macs_hyper_synthesis(h, w);
  rep.modules.push_back(
      {"Enhancement Layer", "Ad. CANF", ps.count_params("enh.canf"), e_enc,
       e_dec});
  return rep;
}

// Aligned text table in the breakdown layout: one section per group, module
// rows with parameter counts and per-pixel MACs for both paths, and a total
// line. Ratios are relative to the respective totals.
inline std::string format_complexity(const ComplexityReport& rep) {
  std::ostringstream os;
  os << "B-frame coding complexity at " << rep.w << "x" << rep.h << "\n";
  os << std::left << std::setw(14) << "Module" << std::right << std::setw(12)
     << "Params" << std::setw(9) << "Ratio" << std::setw(14) << "Enc MACs/px"
     << std::setw(9) << "Ratio" << std::setw(14) << "Dec MACs/px"
     << std::setw(9) << "Ratio" << "\n";
  double pt = static_cast<double>(rep.params_total());
  double et = static_cast<double>(rep.enc_total());
  double dt = static_cast<double>(rep.dec_total());
  auto pct = [](double part, double whole) {
    return whole > 0 ? 100.0 * part / whole : 0.0;
  };
  std::string group;
  os << std::fixed;
  for (const auto& mod : rep.modules) {
    if (mod.group != group) {
      group = mod.group;
      os << "-- " << group << "\n";
    }
    os << std::left << std::setw(14) << mod.name << std::right << std::setw(12)
       << mod.params << std::setw(8) << std::setprecision(2)
       << pct(static_cast<double>(mod.params), pt) << "%" << std::setw(14)
       << std::setprecision(0) << rep.per_pixel(mod.enc_macs) << std::setw(8)
       << std::setprecision(2) << pct(static_cast<double>(mod.enc_macs), et)
       << "%" << std::setw(14) << std::setprecision(0)
       << rep.per_pixel(mod.dec_macs) << std::setw(8) << std::setprecision(2)
       << pct(static_cast<double>(mod.dec_macs), dt) << "%\n";
  }
  os << std::left << std::setw(14) << "Total" << std::right << std::setw(12)
     << rep.params_total() << std::setw(9) << "" << std::setw(14)
     << std::setprecision(0) << rep.per_pixel(rep.enc_total()) << std::setw(9)
     << "" << std::setw(14) << rep.per_pixel(rep.dec_total()) << std::setw(9)
     << "" << "\n";
  os << "(anchor compressor: " << rep.intra_params
     << " params, outside the B-frame path)\n";
  return os.str();
}

}  // namespace tlzmc
