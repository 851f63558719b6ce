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
#include <array>

#include "tlzmc/core/tensor.hpp"

namespace tlzmc {

struct RdPoint {
  double rate = 0.0;     // bits per pixel
  double quality = 0.0;  // PSNR (dB) or MS-SSIM
};

namespace detail {

// Least-squares cubic through (x, y), solved via normal equations on inputs
// centered/scaled for conditioning. Returns coefficients in the scaled
// variable u = (x - shift) / scale, lowest order first.
struct Cubic {
  std::array<double, 4> c{};
  double shift = 0.0, scale = 1.0;

  double eval(double x) const {
    double u = (x - shift) / scale;
    return ((c[3] * u + c[2]) * u + c[1]) * u + c[0];
  }
  // Derivative with respect to u (sign analysis only).
  std::array<double, 3> du() const { return {c[1], 2 * c[2], 3 * c[3]}; }
  double integral(double a, double b) const {
    auto anti = [&](double x) {
      double u = (x - shift) / scale;
      double u2 = u * u;
      return scale * (c[0] * u + c[1] * u2 / 2 + c[2] * u2 * u / 3 +
                      c[3] * u2 * u2 / 4);
    };
    return anti(b) - anti(a);
  }
};

inline Cubic fit_cubic(const std::vector<RdPoint>& pts,
                       const std::vector<double>& ys) {
  int n = static_cast<int>(pts.size());
  Cubic f;
  double lo = pts.front().quality, hi = pts.back().quality;
  f.shift = 0.5 * (lo + hi);
  f.scale = 0.5 * (hi - lo);

  double a[4][5] = {};
  for (int i = 0; i < n; ++i) {
    double u = (pts[i].quality - f.shift) / f.scale;
    double pw[4] = {1.0, u, u * u, u * u * u};
    for (int r = 0; r < 4; ++r) {
      for (int cc = 0; cc < 4; ++cc) a[r][cc] += pw[r] * pw[cc];
      a[r][4] += pw[r] * ys[i];
    }
  }
  // Gaussian elimination with partial pivoting.
  for (int col = 0; col < 4; ++col) {
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    for (int cc = 0; cc < 5; ++cc) std::swap(a[col][cc], a[piv][cc]);
    check(std::abs(a[col][col]) > 1e-12, "bd_rate: singular fit");
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      double m = a[r][col] / a[col][col];
      for (int cc = col; cc < 5; ++cc) a[r][cc] -= m * a[col][cc];
    }
  }
  for (int i = 0; i < 4; ++i) f.c[static_cast<size_t>(i)] = a[i][4] / a[i][i];
  return f;
}

// True when the cubic's derivative keeps one sign over [lo, hi] (in x).
inline bool cubic_monotone(const Cubic& f, double lo, double hi) {
  auto d = f.du();
  double ulo = (lo - f.shift) / f.scale, uhi = (hi - f.shift) / f.scale;
  auto deriv = [&](double u) { return (d[2] * u + d[1]) * u + d[0]; };
  // Sample the quadratic at its extremum and the endpoints.
  std::vector<double> probes{ulo, uhi};
  if (std::abs(d[2]) > 1e-300) {
    double uc = -d[1] / (2 * d[2]);
    if (uc > ulo && uc < uhi) probes.push_back(uc);
  }
  bool pos = true, neg = true;
  for (double u : probes) {
    double v = deriv(u);
    pos = pos && v >= 0.0;
    neg = neg && v <= 0.0;
  }
  return pos || neg;
}

// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
struct Pchip {
  std::vector<double> x, y, d;

  static Pchip fit(const std::vector<RdPoint>& pts,
                   const std::vector<double>& ys) {
    int n = static_cast<int>(pts.size());
    Pchip p;
    p.x.resize(n);
    p.y = ys;
    p.d.assign(n, 0.0);
    for (int i = 0; i < n; ++i) p.x[static_cast<size_t>(i)] = pts[i].quality;

    std::vector<double> h(n - 1), del(n - 1);
    for (int i = 0; i < n - 1; ++i) {
      h[i] = p.x[i + 1] - p.x[i];
      del[i] = (p.y[i + 1] - p.y[i]) / h[i];
    }
    for (int i = 1; i < n - 1; ++i) {
      if (del[i - 1] * del[i] <= 0.0) continue;
      double w1 = 2 * h[i] + h[i - 1], w2 = h[i] + 2 * h[i - 1];
      p.d[i] = (w1 + w2) / (w1 / del[i - 1] + w2 / del[i]);
    }
    auto endpoint = [](double h0, double h1, double d0, double d1) {
      double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
      if (d * d0 <= 0.0) return 0.0;
      if (d0 * d1 < 0.0 && std::abs(d) > 3 * std::abs(d0)) return 3 * d0;
      return d;
    };
    p.d[0] = n > 2 ? endpoint(h[0], h[1], del[0], del[1]) : del[0];
    p.d[n - 1] = n > 2 ? endpoint(h[n - 2], h[n - 3], del[n - 2], del[n - 3])
                       : del[n - 2];
    return p;
  }

  double eval(double q) const {
    size_t i = segment(q);
    double h = x[i + 1] - x[i], t = (q - x[i]) / h;
    double t2 = t * t, t3 = t2 * t;
    return y[i] * (2 * t3 - 3 * t2 + 1) + h * d[i] * (t3 - 2 * t2 + t) +
           y[i + 1] * (-2 * t3 + 3 * t2) + h * d[i + 1] * (t3 - t2);
  }

  // Exact integral over [a, b] (must lie within the sample range).
  double integral(double a, double b) const {
    auto seg_int = [&](size_t i, double ta, double tb) {
      double h = x[i + 1] - x[i];
      auto anti = [&](double t) {
        double t2 = t * t, t3 = t2 * t, t4 = t2 * t2;
        return y[i] * (t4 / 2 - t3 + t) + h * d[i] * (t4 / 4 - 2 * t3 / 3 + t2 / 2) +
               y[i + 1] * (-t4 / 2 + t3) + h * d[i + 1] * (t4 / 4 - t3 / 3);
      };
      return h * (anti(tb) - anti(ta));
    };
    double total = 0.0;
    for (size_t i = 0; i + 1 < x.size(); ++i) {
      double slo = std::max(a, x[i]), shi = std::min(b, x[i + 1]);
      if (shi <= slo) continue;
      double h = x[i + 1] - x[i];
      total += seg_int(i, (slo - x[i]) / h, (shi - x[i]) / h);
    }
    return total;
  }

 private:
  size_t segment(double q) const {
    size_t i = static_cast<size_t>(
        std::upper_bound(x.begin(), x.end(), q) - x.begin());
    if (i > 0) --i;
    return std::min(i, x.size() - 2);
  }
};

// One curve's fitted log10(rate) as a function of quality.
struct LogRateFit {
  bool pchip = false;
  Cubic cubic;
  Pchip hermite;

  double integral(double a, double b) const {
    return pchip ? hermite.integral(a, b) : cubic.integral(a, b);
  }
};

inline LogRateFit fit_log_rate(std::vector<RdPoint> pts, double lo, double hi,
                               const char* which) {
  std::vector<double> ys(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) {
    check(pts[i].rate > 0.0, std::string("bd_rate: non-positive rate in ") + which);
    ys[i] = std::log10(pts[i].rate);
  }
  LogRateFit f;
  f.cubic = fit_cubic(pts, ys);
  if (!cubic_monotone(f.cubic, lo, hi)) {
    f.pchip = true;
    f.hermite = Pchip::fit(pts, ys);
  }
  return f;
}

}  // namespace detail

struct BdResult {
  double percent = 0.0;  // average rate difference of test vs anchor
  bool anchor_pchip = false;
  bool test_pchip = false;
};

// Average rate difference (percent) between two RD curves over their shared
// quality range: cubic least-squares fit of log10(rate) against quality,
// falling back to a monotone piecewise-cubic (PCHIP) when the cubic is
// non-monotone on the integration interval. Negative = test saves rate.
inline BdResult bd_rate(std::vector<RdPoint> anchor, std::vector<RdPoint> test) {
  check(anchor.size() >= 4 && test.size() >= 4,
        "bd_rate: need at least 4 points per curve");
  auto prep = [](std::vector<RdPoint>& pts, const char* which) {
    std::sort(pts.begin(), pts.end(),
              [](const RdPoint& a, const RdPoint& b) { return a.quality < b.quality; });
    for (size_t i = 1; i < pts.size(); ++i)
      check(pts[i].quality > pts[i - 1].quality,
            std::string("bd_rate: duplicate quality in ") + which);
  };
  prep(anchor, "anchor");
  prep(test, "test");

  double lo = std::max(anchor.front().quality, test.front().quality);
  double hi = std::min(anchor.back().quality, test.back().quality);
  check(hi > lo, "bd_rate: quality ranges do not overlap");

  auto fa = detail::fit_log_rate(anchor, lo, hi, "anchor");
  auto ft = detail::fit_log_rate(test, lo, hi, "test");
  double avg = (ft.integral(lo, hi) - fa.integral(lo, hi)) / (hi - lo);

  BdResult r;
  r.percent = 100.0 * (std::pow(10.0, avg) - 1.0);
  r.anchor_pchip = fa.pchip;
  r.test_pchip = ft.pchip;
  return r;
}

}  // namespace tlzmc
