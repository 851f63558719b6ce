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

#include <deque>

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

enum class FrameType : uint8_t { kIntra = 0, kBRef = 1, kBNonRef = 2 };

inline const char* frame_type_name(FrameType t) {
  switch (t) {
    case FrameType::kIntra: return "I";
    case FrameType::kBRef: return "B";
    case FrameType::kBNonRef: return "b";
  }
  return "?";
}

// One coded frame in the hierarchical plan. B frames carry the POCs of their
// two references and their hierarchy distance k; the interpolation midpoint
// assumption holds exactly for interior frames (ref_prev < poc < ref_next,
// both k away). Trailing frames past the last full group are coded with both
// references set to the preceding anchor (ref_prev == ref_next).
struct FrameSlot {
  int poc = 0;
  FrameType type = FrameType::kIntra;
  int ref_prev = -1;
  int ref_next = -1;
  int level_k = 0;  // distance to references; 0 for intra

  bool is_tail() const {
    return type != FrameType::kIntra && ref_prev == ref_next;
  }
};

struct GopPlan {
  int num_frames = 0;
  int gop_size = 0;
  std::vector<FrameSlot> slots;  // coding order
};

inline bool valid_gop_size(int g) {
  return g == 1 || g == 2 || g == 4 || g == 8 || g == 16 || g == 32;
}

namespace detail {

// Emits the interior of (lo, hi) by breadth-first midpoint splitting: level
// by level (largest k first), ascending POC within a level.
inline void emit_interior(int lo, int hi, std::vector<FrameSlot>& out) {
  std::deque<std::pair<int, int>> queue{{lo, hi}};
  while (!queue.empty()) {
    auto [l, h] = queue.front();
    queue.pop_front();
    if (h - l < 2) continue;
    int mid = (l + h) / 2;
    int k = (h - l) / 2;
    out.push_back({mid, k == 1 ? FrameType::kBNonRef : FrameType::kBRef, l, h,
                   k});
    queue.emplace_back(l, mid);
    queue.emplace_back(mid, h);
  }
}

}  // namespace detail

// Builds the coding plan for `num_frames` display-order frames: intra frames
// at every multiple of gop_size, hierarchical B frames in between, and a
// power-of-two ladder of duplicated-reference B anchors for any trailing
// frames after the last intra.
inline GopPlan build_gop_plan(int num_frames, int gop_size) {
  check(num_frames >= 1, "gop: need at least one frame");
  check(valid_gop_size(gop_size), "gop: size must be 1, 2, 4, 8, 16 or 32");

  GopPlan plan;
  plan.num_frames = num_frames;
  plan.gop_size = gop_size;
  plan.slots.push_back({0, FrameType::kIntra, -1, -1, 0});

  int a = 0;
  while (a < num_frames - 1) {
    if (a + gop_size <= num_frames - 1) {
      int b = a + gop_size;
      plan.slots.push_back({b, FrameType::kIntra, -1, -1, 0});
      detail::emit_interior(a, b, plan.slots);
      a = b;
    } else {
      int rem = num_frames - 1 - a;
      int p = 1;
      while (2 * p <= rem) p *= 2;
      int t = a + p;
      plan.slots.push_back({t, FrameType::kBRef, a, a, p});
      detail::emit_interior(a, t, plan.slots);
      a = t;
    }
  }
  return plan;
}

}  // namespace tlzmc
