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

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

constexpr int kPadMultiple = 64;

// One video frame: planar RGB in [0,1], padded by edge replication to
// multiples of 64 in both dimensions; `width`/`height` keep the display size.
struct Frame {
  Tensor data;  // (3, padded_h, padded_w)
  int width = 0;
  int height = 0;
  int poc = 0;

  int padded_width() const { return data.rank() == 3 ? data.dim(2) : 0; }
  int padded_height() const { return data.rank() == 3 ? data.dim(1) : 0; }
};

inline int pad_up(int v, int m = kPadMultiple) { return (v + m - 1) / m * m; }

// Edge-replication padding of a (3, h, w) image up to multiples of `m`.
inline Tensor pad_to_multiple(const Tensor& img, int m = kPadMultiple) {
  check(img.rank() == 3, "pad_to_multiple: rank-3 input required");
  int c = img.dim(0), h = img.dim(1), w = img.dim(2);
  int ph = pad_up(h, m), pw = pad_up(w, m);
  if (ph == h && pw == w) return img;
  Tensor out({c, ph, pw});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < ph; ++y) {
      int sy = std::min(y, h - 1);
      for (int x = 0; x < pw; ++x)
        out.at(ci, y, x) = img.at(ci, sy, std::min(x, w - 1));
    }
  return out;
}

inline Frame make_frame(const Tensor& rgb, int poc = 0) {
  check(rgb.rank() == 3 && rgb.dim(0) == 3, "make_frame: want (3,h,w)");
  Frame f;
  f.height = rgb.dim(1);
  f.width = rgb.dim(2);
  f.poc = poc;
  f.data = pad_to_multiple(rgb);
  return f;
}

// Display-size view (drops the padding).
inline Tensor display_region(const Frame& f) {
  if (f.height == f.padded_height() && f.width == f.padded_width())
    return f.data;
  Tensor out({3, f.height, f.width});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) out.at(c, y, x) = f.data.at(c, y, x);
  return out;
}

}  // namespace tlzmc
