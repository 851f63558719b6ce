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

#include <algorithm>
#include <filesystem>

#include "tlzmc/data/frame_io.hpp"

namespace tlzmc {

// A training clip: consecutive frames of one scene, full resolution,
// display order. Training always works on 7-frame clips so every
// hierarchy level up to k=3 has a valid (prev, target, next) triplet.
struct TrainingClip {
  std::vector<Tensor> frames;  // each (3,h,w), values in [0,1]
};

inline constexpr int kClipLength = 7;

// Random crop (shared window across all frames) plus independent
// horizontal/vertical flips, each with probability 1/2. Deterministic for a
// given seed.
inline TrainingClip augment(const TrainingClip& clip, uint64_t seed,
                            int crop = 256) {
  check(!clip.frames.empty(), "augment: empty clip");
  int h = clip.frames[0].dim(1), w = clip.frames[0].dim(2);
  check(h >= crop && w >= crop, "augment: clip smaller than crop size");
  Rng rng(seed);
  int y0 = rng.uniform_int(h - crop + 1);
  int x0 = rng.uniform_int(w - crop + 1);
  bool hflip = rng.uniform() < 0.5;
  bool vflip = rng.uniform() < 0.5;

  TrainingClip out;
  for (const auto& f : clip.frames) {
    check(f.dim(1) == h && f.dim(2) == w, "augment: ragged clip");
    Tensor t({3, crop, crop});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < crop; ++y)
        for (int x = 0; x < crop; ++x) {
          int sy = y0 + (vflip ? crop - 1 - y : y);
          int sx = x0 + (hflip ? crop - 1 - x : x);
          t.at(c, y, x) = f.at(c, sy, sx);
        }
    out.frames.push_back(std::move(t));
  }
  return out;
}

// A hierarchy-level training triplet: target frame plus its two references
// at temporal distance k on either side.
struct Triplet {
  Tensor prev, target, next;
  int k = 1;                  // temporal distance to each reference
  bool non_ref = false;       // k == 1 frames are never referenced
};

// Picks (center-k, center, center+k) out of a clip. With the default
// 7-frame clip and center 3 this supports k in {1,2,3}; k==1 plays the
// non-reference role of the hierarchy.
inline Triplet triplet_sampler(const TrainingClip& clip, int k,
                               int center = 3) {
  int n = static_cast<int>(clip.frames.size());
  check(k >= 1, "triplet: k must be positive");
  check(center - k >= 0 && center + k < n, "triplet: window out of range");
  Triplet t;
  t.prev = clip.frames[static_cast<size_t>(center - k)];
  t.target = clip.frames[static_cast<size_t>(center)];
  t.next = clip.frames[static_cast<size_t>(center + k)];
  t.k = k;
  t.non_ref = (k == 1);
  return t;
}

// Synthetic training material: a smooth random texture drifting at a
// constant subpixel velocity, plus a little independent noise per frame.
// Deterministic per seed; useful for self-contained training runs.
inline TrainingClip synthetic_clip(uint64_t seed, int h = 64, int w = 64,
                                   int length = kClipLength) {
  Rng rng(seed);
  // Smooth texture: sum of a few random sinusoidal gratings per channel.
  struct Grating {
    double fx, fy, phase, amp;
  };
  std::vector<std::vector<Grating>> waves(3);
  for (auto& ch : waves)
    for (int i = 0; i < 4; ++i)
      ch.push_back({rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0),
                    rng.uniform(0.0, 6.283185307179586),
                    rng.uniform(0.05, 0.2)});
  double vx = rng.uniform(-1.5, 1.5);
  double vy = rng.uniform(-1.5, 1.5);
  double base[3] = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                    rng.uniform(0.3, 0.7)};

  TrainingClip clip;
  for (int t = 0; t < length; ++t) {
    Tensor f({3, h, w});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double u = (x - vx * t) / w, v = (y - vy * t) / h;
          double s = base[c];
          for (const auto& g : waves[static_cast<size_t>(c)])
            s += g.amp * std::sin(6.283185307179586 * (g.fx * u + g.fy * v) +
                                  g.phase);
          s += rng.normal() * 0.003;
          f.at(c, y, x) = static_cast<float>(std::min(std::max(s, 0.0), 1.0));
        }
    clip.frames.push_back(std::move(f));
  }
  return clip;
}

// Loads clips from a directory of per-clip subdirectories, each holding the
// frames of one clip as PNG files. Clips shorter than kClipLength are
// skipped.
inline std::vector<TrainingClip> load_clip_dirs(const std::string& root,
                                                int max_clips = 0) {
  std::vector<std::string> dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory()) dirs.push_back(e.path().string());
  std::sort(dirs.begin(), dirs.end());
  std::vector<TrainingClip> clips;
  for (const auto& d : dirs) {
    if (max_clips > 0 && static_cast<int>(clips.size()) >= max_clips) break;
    auto frames = load_sequence(d);
    if (static_cast<int>(frames.size()) < kClipLength) continue;
    TrainingClip c;
    for (int i = 0; i < kClipLength; ++i)
      c.frames.push_back(display_region(frames[static_cast<size_t>(i)]));
    clips.push_back(std::move(c));
  }
  check(!clips.empty(), "no usable clips under " + root);
  return clips;
}

}  // namespace tlzmc
