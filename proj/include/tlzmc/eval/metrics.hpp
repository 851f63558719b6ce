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

#include "tlzmc/core/conv.hpp"
#include "tlzmc/core/ops.hpp"

namespace tlzmc {

// PSNR in dB between two [0,1] images, capped at 100 (also the value for an
// exact match). Accumulates in double regardless of the storage type.
template <typename T>
double psnr(const TensorT<T>& a, const TensorT<T>& b) {
  check(a.same_shape(b), "psnr: shape mismatch");
  check(a.numel() > 0, "psnr: empty input");
  double se = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  double mse = se / static_cast<double>(a.numel());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, -10.0 * std::log10(mse));
}

namespace detail {

template <typename T>
VarT<T> gaussian_window(int k, double sigma) {
  TensorT<T> w({1, 1, k, k});
  double sum = 0.0;
  int c = k / 2;
  std::vector<double> vals(static_cast<size_t>(k) * k);
  for (int y = 0; y < k; ++y)
    for (int x = 0; x < k; ++x) {
      double d2 = static_cast<double>((y - c) * (y - c) + (x - c) * (x - c));
      double v = std::exp(-d2 / (2.0 * sigma * sigma));
      vals[static_cast<size_t>(y) * k + x] = v;
      sum += v;
    }
  for (int64_t i = 0; i < w.numel(); ++i)
    w[i] = static_cast<T>(vals[static_cast<size_t>(i)] / sum);
  return VarT<T>::constant(std::move(w));
}

// Depthwise valid-mode Gaussian blur.
template <typename T>
VarT<T> blur_valid(const VarT<T>& x, const VarT<T>& window) {
  std::vector<VarT<T>> chans;
  for (int c = 0; c < x.dim(0); ++c)
    chans.push_back(conv2d(slice_c(x, c, c + 1), window, VarT<T>(), 1, 0));
  return chans.size() == 1 ? chans[0] : concat_c(chans);
}

}  // namespace detail

inline constexpr double kMsSsimWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363,
                                             0.1333};
inline constexpr int kMsSsimMinDim = 160;

// Multi-scale SSIM over [0,1] RGB (or any channel count; channels are
// averaged). 5 scales, 11x11 Gaussian window (sigma 1.5), valid-mode
// filtering, factor-2 average-pool between scales. The window is clipped to
// the map size at the coarsest scales when the input is between 160 and 175
// pixels on its short side; below 160 the metric is undefined and errors.
// Differentiable; run it on constants (under NoGradGuard) for plain scoring.
template <typename T>
VarT<T> ms_ssim(const VarT<T>& a, const VarT<T>& b) {
  check(a.value().same_shape(b.value()), "ms_ssim: shape mismatch");
  check(a.rank() == 3, "ms_ssim: rank-3 input required");
  check(std::min(a.dim(1), a.dim(2)) >= kMsSsimMinDim,
        "ms_ssim: input must be at least 160 pixels on its short side");

  const T c1 = T(0.01 * 0.01);  // (0.01 * L)^2, L = 1
  const T c2 = T(0.03 * 0.03);

  VarT<T> x = a, y = b;
  VarT<T> result;
  for (int scale = 0; scale < 5; ++scale) {
    int k = std::min(11, std::min(x.dim(1), x.dim(2)));
    if (k % 2 == 0) --k;
    auto win = detail::gaussian_window<T>(k, 1.5);

    auto mx = detail::blur_valid(x, win);
    auto my = detail::blur_valid(y, win);
    auto mxx = detail::blur_valid(mul(x, x), win);
    auto myy = detail::blur_valid(mul(y, y), win);
    auto mxy = detail::blur_valid(mul(x, y), win);
    auto vx = sub(mxx, mul(mx, mx));
    auto vy = sub(myy, mul(my, my));
    auto cxy = sub(mxy, mul(mx, my));

    auto cs_num = add_scalar(mul_scalar(cxy, T(2)), c2);
    auto cs_den = add_scalar(add(vx, vy), c2);
    auto cs = div_v(cs_num, cs_den);

    VarT<T> term;
    if (scale < 4) {
      term = mean_all(cs);
    } else {
      auto l_num = add_scalar(mul_scalar(mul(mx, my), T(2)), c1);
      auto l_den = add_scalar(add(mul(mx, mx), mul(my, my)), c1);
      term = mean_all(mul(div_v(l_num, l_den), cs));
    }
    // term^weight via exp/log; negative channel means are clipped away.
    auto powed = exp_v(mul_scalar(log_v(clamp_min_v(term, T(1e-6))),
                                  static_cast<T>(kMsSsimWeights[scale])));
    result = scale == 0 ? powed : mul(result, powed);

    if (scale < 4) {
      int eh = x.dim(1) & ~1, ew = x.dim(2) & ~1;
      x = avg_pool2d(crop_hw(x, eh, ew), 2);
      y = avg_pool2d(crop_hw(y, eh, ew), 2);
    }
  }
  return result;
}

// Convenience plain-value wrapper.
template <typename T>
double ms_ssim_value(const TensorT<T>& a, const TensorT<T>& b) {
  NoGradGuard ng;
  return static_cast<double>(
      ms_ssim(VarT<T>::constant(a), VarT<T>::constant(b)).value()[0]);
}

}  // namespace tlzmc
