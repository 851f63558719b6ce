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
#include <cmath>

#include "tlzmc/core/autograd.hpp"

namespace tlzmc {

namespace detail {

template <typename T, class F, class DF>
VarT<T> map_unary(const VarT<T>& a, F f, DF df) {
  const auto& x = a.value();
  TensorT<T> out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return VarT<T>::make(std::move(out), {a},
                       [a, df](typename VarT<T>::Node& n) {
                         const auto& x = a.value();
                         TensorT<T> g(x.shape);
                         for (int64_t i = 0; i < x.numel(); ++i)
                           g[i] = df(x[i], n.value[i]) * n.grad[i];
                         accumulate_grad(a, g);
                       });
}

template <typename T, class F, class DA, class DB>
VarT<T> map_binary(const VarT<T>& a, const VarT<T>& b, F f, DA da, DB db) {
  check(a.value().same_shape(b.value()),
        "elementwise op shape mismatch " + shape_str(a.value().shape) + " vs " +
            shape_str(b.value().shape));
  const auto& xa = a.value();
  const auto& xb = b.value();
  TensorT<T> out(xa.shape);
  for (int64_t i = 0; i < xa.numel(); ++i) out[i] = f(xa[i], xb[i]);
  return VarT<T>::make(
      std::move(out), {a, b}, [a, b, da, db](typename VarT<T>::Node& n) {
        const auto& xa = a.value();
        const auto& xb = b.value();
        if (a.requires_grad()) {
          TensorT<T> g(xa.shape);
          for (int64_t i = 0; i < xa.numel(); ++i)
            g[i] = da(xa[i], xb[i]) * n.grad[i];
          accumulate_grad(a, g);
        }
        if (b.requires_grad()) {
          TensorT<T> g(xb.shape);
          for (int64_t i = 0; i < xb.numel(); ++i)
            g[i] = db(xa[i], xb[i]) * n.grad[i];
          accumulate_grad(b, g);
        }
      });
}

}  // namespace detail

// ---- elementwise arithmetic ----

template <typename T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  return detail::map_binary(
      a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
VarT<T> sub(const VarT<T>& a, const VarT<T>& b) {
  return detail::map_binary(
      a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
VarT<T> mul(const VarT<T>& a, const VarT<T>& b) {
  return detail::map_binary(
      a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
VarT<T> div_v(const VarT<T>& a, const VarT<T>& b) {
  return detail::map_binary(
      a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
VarT<T> add_scalar(const VarT<T>& a, T s) {
  return detail::map_unary(
      a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
VarT<T> mul_scalar(const VarT<T>& a, T s) {
  return detail::map_unary(
      a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
VarT<T> neg(const VarT<T>& a) {
  return mul_scalar(a, T(-1));
}

// ---- activations and transcendentals ----

template <typename T>
VarT<T> leaky_relu(const VarT<T>& a, T slope) {
  return detail::map_unary(
      a, [slope](T x) { return x >= T(0) ? x : slope * x; },
      [slope](T x, T) { return x >= T(0) ? T(1) : slope; });
}

template <typename T>
VarT<T> sigmoid_v(const VarT<T>& a) {
  return detail::map_unary(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
VarT<T> exp_v(const VarT<T>& a) {
  return detail::map_unary(
      a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
VarT<T> log_v(const VarT<T>& a) {
  return detail::map_unary(
      a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
VarT<T> softplus_v(const VarT<T>& a) {
  return detail::map_unary(
      a,
      [](T x) {
        return x > T(0) ? x + std::log1p(std::exp(-x))
                        : std::log1p(std::exp(x));
      },
      [](T x, T) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      });
}

template <typename T>
VarT<T> erf_v(const VarT<T>& a) {
  const T two_over_sqrt_pi = T(1.1283791670955125738961589031L);
  return detail::map_unary(
      a, [](T x) { return std::erf(x); },
      [two_over_sqrt_pi](T x, T) { return two_over_sqrt_pi * std::exp(-x * x); });
}

template <typename T>
VarT<T> clamp_v(const VarT<T>& a, T lo, T hi) {
  return detail::map_unary(
      a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}

template <typename T>
VarT<T> clamp_min_v(const VarT<T>& a, T lo) {
  return detail::map_unary(
      a, [lo](T x) { return std::max(x, lo); },
      [lo](T x, T) { return x >= lo ? T(1) : T(0); });
}

// Round to nearest, ties away from zero; straight-through (identity) gradient.
template <typename T>
VarT<T> round_ste(const VarT<T>& a) {
  return detail::map_unary(
      a, [](T x) { return std::round(x); }, [](T, T) { return T(1); });
}

// Adds a fixed tensor (e.g. pre-drawn quantization noise); identity gradient.
template <typename T>
VarT<T> add_fixed(const VarT<T>& a, const TensorT<T>& t) {
  check(a.value().same_shape(t), "add_fixed shape mismatch");
  const auto& x = a.value();
  TensorT<T> out(x.shape);
  for (int64_t i = 0; i < x.numel(); ++i) out[i] = x[i] + t[i];
  return VarT<T>::make(std::move(out), {a}, [a](typename VarT<T>::Node& n) {
    accumulate_grad(a, n.grad);
  });
}

// ---- structural ops (rank-3: C,H,W) ----

template <typename T>
VarT<T> concat_c(const std::vector<VarT<T>>& parts) {
  check(!parts.empty(), "concat_c: empty input");
  int h = parts[0].dim(1), w = parts[0].dim(2), c = 0;
  for (const auto& p : parts) {
    check(p.rank() == 3 && p.dim(1) == h && p.dim(2) == w,
          "concat_c: spatial mismatch");
    c += p.dim(0);
  }
  TensorT<T> out({c, h, w});
  int64_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data.begin(), v.data.end(), out.data.begin() + off);
    off += v.numel();
  }
  return VarT<T>::make(std::move(out), parts,
                       [parts](typename VarT<T>::Node& n) {
                         int64_t off = 0;
                         for (const auto& p : parts) {
                           int64_t m = p.numel();
                           if (p.requires_grad()) {
                             auto& g = p.node()->grad_buf();
                             for (int64_t i = 0; i < m; ++i)
                               g[i] += n.grad[off + i];
                           }
                           off += m;
                         }
                       });
}

// Channels [c0, c1) of a rank-3 tensor.
template <typename T>
VarT<T> slice_c(const VarT<T>& a, int c0, int c1) {
  check(a.rank() == 3 && 0 <= c0 && c0 < c1 && c1 <= a.dim(0),
        "slice_c: bad channel range");
  int h = a.dim(1), w = a.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<T> out({c1 - c0, h, w});
  std::copy(a.value().data.begin() + c0 * plane,
            a.value().data.begin() + c1 * plane, out.data.begin());
  return VarT<T>::make(std::move(out), {a},
                       [a, c0, plane](typename VarT<T>::Node& n) {
                         auto& g = a.node()->grad_buf();
                         for (int64_t i = 0; i < n.grad.numel(); ++i)
                           g[c0 * plane + i] += n.grad[i];
                       });
}

// Top-left crop to (h, w).
template <typename T>
VarT<T> crop_hw(const VarT<T>& a, int h, int w) {
  check(a.rank() == 3 && h <= a.dim(1) && w <= a.dim(2), "crop_hw: too large");
  int c = a.dim(0), ah = a.dim(1), aw = a.dim(2);
  if (h == ah && w == aw) return a;
  TensorT<T> out({c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) out.at(ci, y, x) = a.value().at(ci, y, x);
  return VarT<T>::make(std::move(out), {a},
                       [a, c, h, w](typename VarT<T>::Node& n) {
                         auto& g = a.node()->grad_buf();
                         int ah = a.dim(1), aw = a.dim(2);
                         for (int ci = 0; ci < c; ++ci)
                           for (int y = 0; y < h; ++y)
                             for (int x = 0; x < w; ++x)
                               g[(static_cast<int64_t>(ci) * ah + y) * aw + x] +=
                                   n.grad.at(ci, y, x);
                       });
}

// Softmax over the channel axis of a rank-3 tensor.
template <typename T>
VarT<T> softmax_c(const VarT<T>& a) {
  check(a.rank() == 3, "softmax_c: rank-3 input required");
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  int64_t plane = static_cast<int64_t>(h) * w;
  const auto& x = a.value();
  TensorT<T> out(x.shape);
  for (int64_t p = 0; p < plane; ++p) {
    T m = x[p];
    for (int ci = 1; ci < c; ++ci) m = std::max(m, x[ci * plane + p]);
    T s = T(0);
    for (int ci = 0; ci < c; ++ci) {
      T e = std::exp(x[ci * plane + p] - m);
      out[ci * plane + p] = e;
      s += e;
    }
    for (int ci = 0; ci < c; ++ci) out[ci * plane + p] /= s;
  }
  return VarT<T>::make(
      std::move(out), {a}, [a, c, plane](typename VarT<T>::Node& n) {
        TensorT<T> g(a.value().shape);
        for (int64_t p = 0; p < plane; ++p) {
          T dot = T(0);
          for (int ci = 0; ci < c; ++ci)
            dot += n.grad[ci * plane + p] * n.value[ci * plane + p];
          for (int ci = 0; ci < c; ++ci)
            g[ci * plane + p] = n.value[ci * plane + p] *
                                (n.grad[ci * plane + p] - dot);
        }
        accumulate_grad(a, g);
      });
}

// y[c,h,w] = x[c,h,w] * scale[c] + bias[c]; used by frame-type adaptation.
template <typename T>
VarT<T> channel_affine(const VarT<T>& x, const VarT<T>& scale,
                       const VarT<T>& bias) {
  check(x.rank() == 3 && scale.rank() == 1 && bias.rank() == 1 &&
            scale.dim(0) == x.dim(0) && bias.dim(0) == x.dim(0),
        "channel_affine: shape mismatch");
  int c = x.dim(0);
  int64_t plane = static_cast<int64_t>(x.dim(1)) * x.dim(2);
  TensorT<T> out(x.value().shape);
  for (int ci = 0; ci < c; ++ci) {
    T s = scale.value()[ci], b = bias.value()[ci];
    for (int64_t p = 0; p < plane; ++p)
      out[ci * plane + p] = x.value()[ci * plane + p] * s + b;
  }
  return VarT<T>::make(
      std::move(out), {x, scale, bias},
      [x, scale, bias, c, plane](typename VarT<T>::Node& n) {
        if (x.requires_grad()) {
          TensorT<T> g(x.value().shape);
          for (int ci = 0; ci < c; ++ci) {
            T s = scale.value()[ci];
            for (int64_t p = 0; p < plane; ++p)
              g[ci * plane + p] = n.grad[ci * plane + p] * s;
          }
          accumulate_grad(x, g);
        }
        if (scale.requires_grad()) {
          TensorT<T> g({c});
          for (int ci = 0; ci < c; ++ci) {
            T acc = T(0);
            for (int64_t p = 0; p < plane; ++p)
              acc += n.grad[ci * plane + p] * x.value()[ci * plane + p];
            g[ci] = acc;
          }
          accumulate_grad(scale, g);
        }
        if (bias.requires_grad()) {
          TensorT<T> g({c});
          for (int ci = 0; ci < c; ++ci) {
            T acc = T(0);
            for (int64_t p = 0; p < plane; ++p) acc += n.grad[ci * plane + p];
            g[ci] = acc;
          }
          accumulate_grad(bias, g);
        }
      });
}

// y[c,h,w] = v[c]; gradient sums over the spatial plane.
template <typename T>
VarT<T> broadcast_c(const VarT<T>& v, int h, int w) {
  check(v.rank() == 1, "broadcast_c: want a rank-1 channel vector");
  int c = v.dim(0);
  int64_t plane = static_cast<int64_t>(h) * w;
  TensorT<T> out({c, h, w});
  for (int ci = 0; ci < c; ++ci)
    for (int64_t p = 0; p < plane; ++p) out[ci * plane + p] = v.value()[ci];
  return VarT<T>::make(std::move(out), {v},
                       [v, c, plane](typename VarT<T>::Node& n) {
                         TensorT<T> g({c});
                         for (int ci = 0; ci < c; ++ci) {
                           T acc = T(0);
                           for (int64_t p = 0; p < plane; ++p)
                             acc += n.grad[ci * plane + p];
                           g[ci] = acc;
                         }
                         accumulate_grad(v, g);
                       });
}

// ---- reductions ----

template <typename T>
VarT<T> sum_all(const VarT<T>& a) {
  T s = T(0);
  for (int64_t i = 0; i < a.numel(); ++i) s += a.value()[i];
  TensorT<T> out({1});
  out[0] = s;
  return VarT<T>::make(std::move(out), {a}, [a](typename VarT<T>::Node& n) {
    auto& g = a.node()->grad_buf();
    for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[0];
  });
}

// Divides (rather than multiplying by a reciprocal) so that e.g. the mean of
// n exact ones is exactly one.
template <typename T>
VarT<T> mean_all(const VarT<T>& a) {
  const T n = static_cast<T>(a.numel());
  return detail::map_unary(
      sum_all(a), [n](T x) { return x / n; }, [n](T, T) { return T(1) / n; });
}

template <typename T>
VarT<T> mse_loss(const VarT<T>& a, const VarT<T>& b) {
  auto d = sub(a, b);
  return mean_all(mul(d, d));
}

// ---- spatial ops ----

// Non-overlapping k x k average pooling (stride k); sizes must divide.
template <typename T>
VarT<T> avg_pool2d(const VarT<T>& a, int k) {
  check(a.rank() == 3 && a.dim(1) % k == 0 && a.dim(2) % k == 0,
        "avg_pool2d: size not divisible by kernel");
  int c = a.dim(0), h = a.dim(1) / k, w = a.dim(2) / k;
  TensorT<T> out({c, h, w});
  const T inv = T(1) / static_cast<T>(k * k);
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        T s = T(0);
        for (int u = 0; u < k; ++u)
          for (int v = 0; v < k; ++v)
            s += a.value().at(ci, y * k + u, x * k + v);
        out.at(ci, y, x) = s * inv;
      }
  return VarT<T>::make(
      std::move(out), {a}, [a, c, h, w, k, inv](typename VarT<T>::Node& n) {
        TensorT<T> g(a.value().shape);
        for (int ci = 0; ci < c; ++ci)
          for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
              T gv = n.grad.at(ci, y, x) * inv;
              for (int u = 0; u < k; ++u)
                for (int v = 0; v < k; ++v)
                  g.at(ci, y * k + u, x * k + v) += gv;
            }
        accumulate_grad(a, g);
      });
}

namespace detail {
// Source taps for factor-2 bilinear upsampling (align_corners = false):
// destination d maps to source (d + 0.5) / 2 - 0.5.
struct UpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets (1 - w1)
};
inline UpTap up2_tap(int d, int n) {
  double s = (d + 0.5) / 2.0 - 0.5;
  double f = std::floor(s);
  int i0 = static_cast<int>(f);
  double w1 = s - f;
  int i1 = i0 + 1;
  if (i0 < 0) i0 = 0;
  if (i1 > n - 1) i1 = n - 1;
  return {i0, i1, w1};
}
}  // namespace detail

// Factor-2 bilinear upsampling, align_corners = false.
template <typename T>
VarT<T> upsample_bilinear2(const VarT<T>& a) {
  check(a.rank() == 3, "upsample_bilinear2: rank-3 input required");
  int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  int oh = 2 * h, ow = 2 * w;
  TensorT<T> out({c, oh, ow});
  for (int y = 0; y < oh; ++y) {
    auto ty = detail::up2_tap(y, h);
    for (int x = 0; x < ow; ++x) {
      auto tx = detail::up2_tap(x, w);
      for (int ci = 0; ci < c; ++ci) {
        T v00 = a.value().at(ci, ty.i0, tx.i0);
        T v01 = a.value().at(ci, ty.i0, tx.i1);
        T v10 = a.value().at(ci, ty.i1, tx.i0);
        T v11 = a.value().at(ci, ty.i1, tx.i1);
        T vy0 = v00 + static_cast<T>(tx.w1) * (v01 - v00);
        T vy1 = v10 + static_cast<T>(tx.w1) * (v11 - v10);
        out.at(ci, y, x) = vy0 + static_cast<T>(ty.w1) * (vy1 - vy0);
      }
    }
  }
  return VarT<T>::make(
      std::move(out), {a}, [a, c, h, w, oh, ow](typename VarT<T>::Node& n) {
        TensorT<T> g(a.value().shape);
        for (int y = 0; y < oh; ++y) {
          auto ty = detail::up2_tap(y, h);
          for (int x = 0; x < ow; ++x) {
            auto tx = detail::up2_tap(x, w);
            for (int ci = 0; ci < c; ++ci) {
              T gv = n.grad.at(ci, y, x);
              T wy1 = static_cast<T>(ty.w1), wx1 = static_cast<T>(tx.w1);
              g.at(ci, ty.i0, tx.i0) += gv * (T(1) - wy1) * (T(1) - wx1);
              g.at(ci, ty.i0, tx.i1) += gv * (T(1) - wy1) * wx1;
              g.at(ci, ty.i1, tx.i0) += gv * wy1 * (T(1) - wx1);
              g.at(ci, ty.i1, tx.i1) += gv * wy1 * wx1;
            }
          }
        }
        accumulate_grad(a, g);
      });
}

namespace detail {
// Visits every output position of a backward warp with its bilinear taps.
// cy/cx report whether the clamp saturated (zero flow gradient there).
template <typename T, class Visit>
void warp_visit(const TensorT<T>& flow, int h, int w, Visit&& visit) {
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T xf = static_cast<T>(x) + flow.at(0, y, x);
      T yf = static_cast<T>(y) + flow.at(1, y, x);
      bool cx = xf < T(0) || xf > static_cast<T>(w - 1);
      bool cy = yf < T(0) || yf > static_cast<T>(h - 1);
      xf = std::min(std::max(xf, T(0)), static_cast<T>(w - 1));
      yf = std::min(std::max(yf, T(0)), static_cast<T>(h - 1));
      // floor of a clamped coordinate keeps x0 in range; exact-integer hits
      // (x1 == x0, weight 0) take the pixel value bit-exactly.
      int x0 = static_cast<int>(std::floor(xf));
      int y0 = static_cast<int>(std::floor(yf));
      int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      T wx = xf - static_cast<T>(x0), wy = yf - static_cast<T>(y0);
      visit(y, x, y0, x0, y1, x1, wy, wx, cy, cx);
    }
}
}  // namespace detail

// Backward warping: out(c, y, x) = src(c, y + fy(y,x), x + fx(y,x)) sampled
// bilinearly; flow is (2, H, W) with channel 0 = dx, channel 1 = dy.
// Out-of-range coordinates are clamped to the border (and get zero flow
// gradient there, since the clamp saturates).
template <typename T>
VarT<T> warp_bilinear(const VarT<T>& src, const VarT<T>& flow) {
  check(src.rank() == 3 && flow.rank() == 3 && flow.dim(0) == 2 &&
            flow.dim(1) == src.dim(1) && flow.dim(2) == src.dim(2),
        "warp_bilinear: shape mismatch");
  int c = src.dim(0), h = src.dim(1), w = src.dim(2);
  TensorT<T> out({c, h, w});
  const auto& s = src.value();
  detail::warp_visit(flow.value(), h, w,
                     [&](int y, int x, int y0, int x0, int y1, int x1, T wy,
                         T wx, bool, bool) {
                       for (int ci = 0; ci < c; ++ci) {
                         T v00 = s.at(ci, y0, x0), v01 = s.at(ci, y0, x1);
                         T v10 = s.at(ci, y1, x0), v11 = s.at(ci, y1, x1);
                         T vy0 = v00 + wx * (v01 - v00);
                         T vy1 = v10 + wx * (v11 - v10);
                         out.at(ci, y, x) = vy0 + wy * (vy1 - vy0);
                       }
                     });
  return VarT<T>::make(
      std::move(out), {src, flow},
      [src, flow, c, h, w](typename VarT<T>::Node& n) {
        const auto& s = src.value();
        TensorT<T> gs(s.shape);
        TensorT<T> gf(flow.value().shape);
        detail::warp_visit(
            flow.value(), h, w,
            [&](int y, int x, int y0, int x0, int y1, int x1, T wy, T wx,
                bool cy, bool cx) {
              for (int ci = 0; ci < c; ++ci) {
                T gv = n.grad.at(ci, y, x);
                if (gv == T(0)) continue;
                gs.at(ci, y0, x0) += gv * (T(1) - wy) * (T(1) - wx);
                gs.at(ci, y0, x1) += gv * (T(1) - wy) * wx;
                gs.at(ci, y1, x0) += gv * wy * (T(1) - wx);
                gs.at(ci, y1, x1) += gv * wy * wx;
                T v00 = s.at(ci, y0, x0), v01 = s.at(ci, y0, x1);
                T v10 = s.at(ci, y1, x0), v11 = s.at(ci, y1, x1);
                if (!cx)
                  gf.at(0, y, x) +=
                      gv * ((T(1) - wy) * (v01 - v00) + wy * (v11 - v10));
                if (!cy)
                  gf.at(1, y, x) +=
                      gv * ((T(1) - wx) * (v10 - v00) + wx * (v11 - v01));
              }
            });
        accumulate_grad(src, gs);
        accumulate_grad(flow, gf);
      });
}

}  // namespace tlzmc
