// Copyright 2026 The pdconv Authors.
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

// Direct loop-nest reference implementations used as test oracles. They
// share nothing with the library kernels beyond the Tensor container.

#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pdconv/conv.hpp"
#include "pdconv/random.hpp"

namespace pdconv::oracle {

/// Six-loop grouped convolution with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const std::vector<T>& bias, const ConvSpec& s) {
  const std::int64_t oh = s.out_h(x.h());
  const std::int64_t ow = s.out_w(x.w());
  const std::int64_t cin_g = x.c() / s.groups;
  const std::int64_t cout_g = w.n() / s.groups;
  Tensor<T> y(Shape{x.n(), w.n(), oh, ow});
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t oc = 0; oc < w.n(); ++oc) {
      const std::int64_t g = oc / cout_g;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          long double acc = bias.empty() ? 0.0L : static_cast<long double>(bias[oc]);
          for (std::int64_t ic = 0; ic < cin_g; ++ic) {
            for (int ky = 0; ky < s.kh; ++ky) {
              for (int kx = 0; kx < s.kw; ++kx) {
                const std::int64_t iy = oy * s.stride - s.pad_h() + ky * s.dilation;
                const std::int64_t ix = ox * s.stride - s.pad_w() + kx * s.dilation;
                if (iy < 0 || iy >= x.h() || ix < 0 || ix >= x.w()) continue;
                acc += static_cast<long double>(w(oc, ic, ky, kx)) * x(n, g * cin_g + ic, iy, ix);
              }
            }
          }
          y(n, oc, oy, ox) = static_cast<T>(acc);
        }
      }
    }
  }
  return y;
}

/// Depthwise pixel-difference convolution as the blend
///   (1 - a) * sum w(pn) x(p0 + pn) + a * sum w(pn) (x(p0 + pn) - x(p0))
/// with zero padding.
template <typename T>
Tensor<T> pdc(const Tensor<T>& x, const Tensor<T>& w, double alpha, int dilation) {
  const int k = static_cast<int>(w.h());
  const int r = (k - 1) / 2 * dilation;
  Tensor<T> y(x.shape());
  for (std::int64_t n = 0; n < x.n(); ++n) {
    for (std::int64_t c = 0; c < x.c(); ++c) {
      for (std::int64_t py = 0; py < x.h(); ++py) {
        for (std::int64_t px = 0; px < x.w(); ++px) {
          const long double center = x(n, c, py, px);
          long double vanilla = 0.0L;
          long double diff = 0.0L;
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const std::int64_t iy = py - r + ky * dilation;
              const std::int64_t ix = px - r + kx * dilation;
              const bool inside = iy >= 0 && iy < x.h() && ix >= 0 && ix < x.w();
              const long double v = inside ? static_cast<long double>(x(n, c, iy, ix)) : 0.0L;
              vanilla += w(c, 0, ky, kx) * v;
              diff += w(c, 0, ky, kx) * (v - center);
            }
          }
          y(n, c, py, px) = static_cast<T>((1.0L - alpha) * vanilla + alpha * diff);
        }
      }
    }
  }
  return y;
}

/// Brute-force pixel accuracy and mean IoU by direct set counting per class.
struct Scores {
  double pixel_acc;
  double miou;
  std::vector<double> iou;  // NaN for classes absent from both maps
};

inline Scores brute_force_scores(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& truth,
                                 int classes) {
  Scores s{0.0, 0.0, {}};
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == truth[i];
  s.pixel_acc = static_cast<double>(correct) / static_cast<double>(pred.size());
  double total = 0.0;
  int present = 0;
  for (int c = 0; c < classes; ++c) {
    std::int64_t inter = 0;
    std::int64_t uni = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const bool p = pred[i] == c;
      const bool t = truth[i] == c;
      inter += p && t;
      uni += p || t;
    }
    if (uni == 0) {
      s.iou.push_back(std::nan(""));
      continue;
    }
    s.iou.push_back(static_cast<double>(inter) / static_cast<double>(uni));
    total += s.iou.back();
    ++present;
  }
  s.miou = total / present;
  return s;
}

}  // namespace pdconv::oracle
