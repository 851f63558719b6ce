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

#include <Eigen/Core>

#include "tlzmc/core/autograd.hpp"

namespace tlzmc {

namespace detail {

template <typename T>
using MatT = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Patch matrix for convolution: rows index (ci, u, v), columns index output
// positions. Zero padding outside the input.
template <typename T>
MatT<T> im2col(const TensorT<T>& x, int k, int stride, int pad, int oh,
               int ow) {
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  MatT<T> cols(c * k * k, static_cast<Eigen::Index>(oh) * ow);
  cols.setZero();
  for (int ci = 0; ci < c; ++ci)
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v) {
        Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + u) * k + v;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + u;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + v;
            if (ix < 0 || ix >= w) continue;
            cols(row, static_cast<Eigen::Index>(oy) * ow + ox) = x.at(ci, iy, ix);
          }
        }
      }
  return cols;
}

// Adjoint of im2col: scatter-adds patch-matrix values back into an image.
template <typename T>
void col2im_add(const MatT<T>& cols, int k, int stride, int pad, int oh,
                int ow, TensorT<T>& x) {
  int c = x.dim(0), h = x.dim(1), w = x.dim(2);
  for (int ci = 0; ci < c; ++ci)
    for (int u = 0; u < k; ++u)
      for (int v = 0; v < k; ++v) {
        Eigen::Index row = (static_cast<Eigen::Index>(ci) * k + u) * k + v;
        for (int oy = 0; oy < oh; ++oy) {
          int iy = oy * stride - pad + u;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < ow; ++ox) {
            int ix = ox * stride - pad + v;
            if (ix < 0 || ix >= w) continue;
            x.at(ci, iy, ix) += cols(row, static_cast<Eigen::Index>(oy) * ow + ox);
          }
        }
      }
}

}  // namespace detail

inline int conv_out_size(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}
inline int tconv_out_size(int in, int k, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + k + out_pad;
}

// 2D convolution. x: (Cin,H,W), w: (Cout,Cin,k,k), b: (Cout) or undefined.
template <typename T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b,
               int stride, int pad) {
  check(x.rank() == 3 && w.rank() == 4 && w.dim(1) == x.dim(0),
        "conv2d: shape mismatch " + shape_str(x.value().shape) + " w " +
            shape_str(w.value().shape));
  int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  int cout = w.dim(0), k = w.dim(2);
  int oh = conv_out_size(h, k, stride, pad), ow = conv_out_size(ww, k, stride, pad);
  check(oh > 0 && ow > 0, "conv2d: output would be empty");

  auto cols = detail::im2col(x.value(), k, stride, pad, oh, ow);
  Eigen::Map<const detail::MatT<T>> wm(w.value().data.data(), cout,
                                       static_cast<Eigen::Index>(cin) * k * k);
  TensorT<T> out({cout, oh, ow});
  Eigen::Map<detail::MatT<T>> ym(out.data.data(), cout,
                                 static_cast<Eigen::Index>(oh) * ow);
  ym.noalias() = wm * cols;
  if (b.defined()) {
    for (int co = 0; co < cout; ++co)
      ym.row(co).array() += b.value()[co];
  }

  std::vector<VarT<T>> parents = b.defined() ? std::vector<VarT<T>>{x, w, b}
                                             : std::vector<VarT<T>>{x, w};
  return VarT<T>::make(
      std::move(out), std::move(parents),
      [x, w, b, stride, pad, cin, cout, k, oh, ow](typename VarT<T>::Node& n) {
        Eigen::Map<const detail::MatT<T>> dym(
            n.grad.data.data(), cout, static_cast<Eigen::Index>(oh) * ow);
        if (w.requires_grad()) {
          auto cols = detail::im2col(x.value(), k, stride, pad, oh, ow);
          auto& gw = w.node()->grad_buf();
          Eigen::Map<detail::MatT<T>> gwm(
              gw.data.data(), cout, static_cast<Eigen::Index>(cin) * k * k);
          gwm.noalias() += dym * cols.transpose();
        }
        if (x.requires_grad()) {
          Eigen::Map<const detail::MatT<T>> wm(
              w.value().data.data(), cout,
              static_cast<Eigen::Index>(cin) * k * k);
          detail::MatT<T> dcols = wm.transpose() * dym;
          auto& gx = x.node()->grad_buf();
          detail::col2im_add(dcols, k, stride, pad, oh, ow, gx);
        }
        if (b.defined() && b.requires_grad()) {
          auto& gb = b.node()->grad_buf();
          for (int co = 0; co < cout; ++co) gb[co] += dym.row(co).sum();
        }
      });
}

// 2D transposed convolution. x: (Cin,H,W), w: (Cin,Cout,k,k), b: (Cout).
// Output size (H-1)*stride - 2*pad + k + out_pad.
template <typename T>
VarT<T> conv_transpose2d(const VarT<T>& x, const VarT<T>& w, const VarT<T>& b,
                         int stride, int pad, int out_pad) {
  check(x.rank() == 3 && w.rank() == 4 && w.dim(0) == x.dim(0),
        "conv_transpose2d: shape mismatch");
  int cin = x.dim(0), h = x.dim(1), ww = x.dim(2);
  int cout = w.dim(1), k = w.dim(2);
  int oh = tconv_out_size(h, k, stride, pad, out_pad);
  int ow = tconv_out_size(ww, k, stride, pad, out_pad);
  check(oh > 0 && ow > 0, "conv_transpose2d: output would be empty");

  // cols = W^T * X, scattered into the output grid; exactly the adjoint of
  // a stride-`stride` convolution from the output back to the input.
  Eigen::Map<const detail::MatT<T>> wm(w.value().data.data(), cin,
                                       static_cast<Eigen::Index>(cout) * k * k);
  Eigen::Map<const detail::MatT<T>> xm(x.value().data.data(), cin,
                                       static_cast<Eigen::Index>(h) * ww);
  detail::MatT<T> cols = wm.transpose() * xm;
  TensorT<T> out({cout, oh, ow});
  detail::col2im_add(cols, k, stride, pad, h, ww, out);
  if (b.defined()) {
    int64_t plane = static_cast<int64_t>(oh) * ow;
    for (int co = 0; co < cout; ++co)
      for (int64_t p = 0; p < plane; ++p) out[co * plane + p] += b.value()[co];
  }

  std::vector<VarT<T>> parents = b.defined() ? std::vector<VarT<T>>{x, w, b}
                                             : std::vector<VarT<T>>{x, w};
  return VarT<T>::make(
      std::move(out), std::move(parents),
      [x, w, b, stride, pad, cin, cout, k, h, ww](typename VarT<T>::Node& n) {
        // Gather taps of the gradient image with the forward's scatter
        // geometry; shared by dX and dW.
        auto cols = detail::im2col(n.grad, k, stride, pad, h, ww);
        if (x.requires_grad()) {
          Eigen::Map<const detail::MatT<T>> wm(
              w.value().data.data(), cin,
              static_cast<Eigen::Index>(cout) * k * k);
          auto& gx = x.node()->grad_buf();
          Eigen::Map<detail::MatT<T>> gxm(gx.data.data(), cin,
                                          static_cast<Eigen::Index>(h) * ww);
          gxm.noalias() += wm * cols;
        }
        if (w.requires_grad()) {
          Eigen::Map<const detail::MatT<T>> xm(
              x.value().data.data(), cin, static_cast<Eigen::Index>(h) * ww);
          auto& gw = w.node()->grad_buf();
          Eigen::Map<detail::MatT<T>> gwm(
              gw.data.data(), cin, static_cast<Eigen::Index>(cout) * k * k);
          gwm.noalias() += xm * cols.transpose();
        }
        if (b.defined() && b.requires_grad()) {
          auto& gb = b.node()->grad_buf();
          int64_t plane = static_cast<int64_t>(n.grad.dim(1)) * n.grad.dim(2);
          for (int co = 0; co < cout; ++co) {
            T acc = T(0);
            for (int64_t p = 0; p < plane; ++p) acc += n.grad[co * plane + p];
            gb[co] += acc;
          }
        }
      });
}

}  // namespace tlzmc
