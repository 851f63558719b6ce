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

#include "tlzmc/codec/engine.hpp"

namespace tlzmc {

// Bit accounting and skip-mask statistics over one coded sequence. Bits are
// counted exactly from the container's stream lengths; retained fractions
// come from the masks regenerated during decoding. Intra frames carry no
// base/enhancement split and are reported separately.

struct LayerStats {
  int64_t base_bits = 0;
  int64_t enh_bits = 0;
  int64_t intra_bits = 0;
  std::vector<double> retained;   // per coded B frame, coding order
  double retained_mean = -1.0;    // -1 when the stream has no B frames
  double retained_ref = -1.0;     // reference B frames only
  double retained_nonref = -1.0;  // non-reference B frames only

  int64_t total_bits() const { return base_bits + enh_bits + intra_bits; }
  // Base share of the inter-coded payload (intra excluded, per convention).
  double base_fraction() const {
    int64_t inter = base_bits + enh_bits;
    return inter > 0 ? static_cast<double>(base_bits) / inter : 0.0;
  }
};

inline LayerStats layer_stats(const Container& container,
                              const std::vector<FrameStat>& stats) {
  check(container.frames.size() == stats.size(),
        "layer_stats: mask/frame count mismatch");
  LayerStats out;
  double sum = 0.0, sum_r = 0.0, sum_nr = 0.0;
  int n = 0, n_r = 0, n_nr = 0;
  for (size_t i = 0; i < container.frames.size(); ++i) {
    const FrameRecord& rec = container.frames[i];
    FrameType type = static_cast<FrameType>(rec.frame_type);
    check(static_cast<int>(rec.poc) == stats[i].poc && type == stats[i].type,
          "layer_stats: record/stat order mismatch");
    int64_t bits = rec.payload_bits();
    if (type == FrameType::kIntra) {
      out.intra_bits += bits;
      continue;
    }
    check(rec.streams.size() == 4, "layer_stats: malformed B-frame record");
    int64_t base = static_cast<int64_t>(rec.streams[0].size() +
                                        rec.streams[1].size()) *
                   8;
    out.base_bits += base;
    out.enh_bits += bits - base;
    double r = stats[i].retained;
    check(r >= 0.0 && r <= 1.0, "layer_stats: missing retained fraction");
    out.retained.push_back(r);
    sum += r;
    ++n;
    if (type == FrameType::kBRef) {
      sum_r += r;
      ++n_r;
    } else {
      sum_nr += r;
      ++n_nr;
    }
  }
  if (n > 0) out.retained_mean = sum / n;
  if (n_r > 0) out.retained_ref = sum_r / n_r;
  if (n_nr > 0) out.retained_nonref = sum_nr / n_nr;
  return out;
}

// Per-frame stats as CSV (coding order). Retained is empty for intra rows.
inline std::string stats_csv(const std::vector<FrameStat>& stats) {
  std::ostringstream os;
  os << "poc,type,bits,base_bits,enh_bits,retained\n";
  for (const auto& s : stats) {
    os << s.poc << "," << frame_type_name(s.type) << "," << s.bits << ","
       << s.base_bits << "," << s.enh_bits << ",";
    if (s.retained >= 0.0) os << std::setprecision(6) << s.retained;
    os << "\n";
  }
  return os.str();
}

}  // namespace tlzmc
