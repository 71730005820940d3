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

#include "pdconv/ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "pdconv/parallel.hpp"

namespace pdconv::ag {
namespace {

template <typename T>
bool wants(const Node<T>& node, std::size_t i) {
  return node.parents[i]->requires_grad;
}

template <typename T>
void require_scalar(const Var<T>& s, const char* what) {
  if (s.value().size() != 1) {
    throw DimensionError(std::string(what) + " must hold one element, got shape " + s.shape().str());
  }
}

template <typename T>
void axpy(Tensor<T>& dst, const Tensor<T>& src, T factor) {
  T* d = dst.ptr();
  const T* s = src.ptr();
  for (std::int64_t i = 0; i < dst.size(); ++i) d[i] += factor * s[i];
}

// Per-channel kernel sums S_c = sum_k w(c, 0, k) of a depthwise weight.
template <typename T>
std::vector<T> kernel_sums(const Tensor<T>& weight) {
  std::vector<T> sums(static_cast<std::size_t>(weight.n()), T{0});
  const std::int64_t taps = weight.h() * weight.w();
  for (std::int64_t c = 0; c < weight.n(); ++c) {
    const T* w = weight.plane(c, 0);
    for (std::int64_t k = 0; k < taps; ++k) sums[c] += w[k];
  }
  return sums;
}

// One-dimensional bilinear sampling table for half-pixel centers.
struct LerpTap {
  std::int64_t i0;
  std::int64_t i1;
  double w1;
};

std::vector<LerpTap> lerp_table(std::int64_t in, std::int64_t out) {
  std::vector<LerpTap> taps(static_cast<std::size_t>(out));
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    std::int64_t i0 = static_cast<std::int64_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::int64_t i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec) {
  ConvWeights<T> cw{weight.value(), std::nullopt};
  if (bias.defined()) cw.bias = bias.value();
  Tensor<T> out = pdconv::conv2d(x.value(), cw, spec);
  std::vector<Var<T>> parents{x, weight};
  if (bias.defined()) parents.push_back(bias);
  return make_op<T>("conv2d", std::move(out), std::move(parents), [spec](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const Tensor<T>& xv = self.parents[0]->value;
    const Tensor<T>& wv = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(conv2d_grad_input(g, wv, spec, xv.shape()));
    const bool has_bias = self.parents.size() > 2;
    Tensor<T>* gb = (has_bias && wants(self, 2)) ? &self.parents[2]->grad_buffer() : nullptr;
    if (wants(self, 1)) {
      conv2d_grad_weight(g, xv, spec, self.parents[1]->grad_buffer(), gb);
    } else if (gb != nullptr) {
      Tensor<T> scratch(wv.shape());
      conv2d_grad_weight(g, xv, spec, scratch, gb);
    }
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = elementwise(ElementwiseOp::add, a.value(), b.value());
  return make_op<T>("add", std::move(out), {a, b}, [](Node<T>& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) self.parents[1]->accumulate(self.grad);
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = elementwise(ElementwiseOp::sub, a.value(), b.value());
  return make_op<T>("sub", std::move(out), {a, b}, [](Node<T>& self) {
    if (wants(self, 0)) self.parents[0]->accumulate(self.grad);
    if (wants(self, 1)) axpy(self.parents[1]->grad_buffer(), self.grad, T{-1});
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = elementwise(ElementwiseOp::mul, a.value(), b.value());
  return make_op<T>("mul", std::move(out), {a, b}, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    if (wants(self, 0)) {
      self.parents[0]->accumulate(elementwise(ElementwiseOp::mul, g, self.parents[1]->value));
    }
    if (wants(self, 1)) {
      self.parents[1]->accumulate(elementwise(ElementwiseOp::mul, g, self.parents[0]->value));
    }
  });
}

template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  Tensor<T> out = elementwise(ElementwiseOp::div, a.value(), b.value());
  return make_op<T>("div", std::move(out), {a, b}, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const Tensor<T>& av = self.parents[0]->value;
    const Tensor<T>& bv = self.parents[1]->value;
    if (wants(self, 0)) self.parents[0]->accumulate(elementwise(ElementwiseOp::div, g, bv));
    if (wants(self, 1)) {
      Tensor<T>& gb = self.parents[1]->grad_buffer();
      for (std::int64_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, double factor) {
  const T f = static_cast<T>(factor);
  Tensor<T> out = elementwise(ElementwiseOp::mul, a.value(), f);
  return make_op<T>("scale", std::move(out), {a}, [f](Node<T>& self) {
    axpy(self.parents[0]->grad_buffer(), self.grad, f);
  });
}

template <typename T>
Var<T> mul_scalar(const Var<T>& a, const Var<T>& s) {
  require_scalar(s, "mul_scalar factor");
  Tensor<T> out = elementwise(ElementwiseOp::mul, a.value(), s.value()[0]);
  return make_op<T>("mul_scalar", std::move(out), {a, s}, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const T sv = self.parents[1]->value[0];
    if (wants(self, 0)) axpy(self.parents[0]->grad_buffer(), g, sv);
    if (wants(self, 1)) {
      const Tensor<T>& av = self.parents[0]->value;
      T acc{0};
      for (std::int64_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      self.parents[1]->grad_buffer()[0] += acc;
    }
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  T acc{0};
  for (const T v : a.value().data()) acc += v;
  return make_op<T>("sum", Tensor<T>::scalar(acc), {a}, [](Node<T>& self) {
    const T g = self.grad[0];
    Tensor<T>& ga = self.parents[0]->grad_buffer();
    for (auto& v : ga.data()) v += g;
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& weights) {
  require_same_shape(a.shape(), weights.shape(), "weighted_sum");
  T acc{0};
  for (std::int64_t i = 0; i < weights.size(); ++i) acc += a.value()[i] * weights[i];
  return make_op<T>("weighted_sum", Tensor<T>::scalar(acc), {a}, [weights](Node<T>& self) {
    axpy(self.parents[0]->grad_buffer(), weights, self.grad[0]);
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> out(a.shape());
  for (std::int64_t i = 0; i < out.size(); ++i) {
    const T x = a.value()[i];
    if (x >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T{1} + e);
    }
  }
  return make_op<T>("sigmoid", std::move(out), {a}, [](Node<T>& self) {
    // The node value is the sigmoid output.
    const Tensor<T>& y = self.value;
    Tensor<T>& ga = self.parents[0]->grad_buffer();
    for (std::int64_t i = 0; i < y.size(); ++i) ga[i] += self.grad[i] * y[i] * (T{1} - y[i]);
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  Tensor<T> out(a.shape());
  const T* src = a.value().ptr();
  T* dst = out.ptr();
  for (std::int64_t i = 0; i < out.size(); ++i) dst[i] = src[i] < T{0} ? T{0} : src[i];  // NaN propagates
  return make_op<T>("relu", std::move(out), {a}, [](Node<T>& self) {
    const T* x = self.parents[0]->value.ptr();
    const T* g = self.grad.ptr();
    T* ga = self.parents[0]->grad_buffer().ptr();
    for (std::int64_t i = 0; i < self.grad.size(); ++i) {
      if (x[i] > T{0}) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> pdc(const Var<T>& x, const Var<T>& weight, const Var<T>& alpha, const ConvSpec& spec,
           PdcMode mode) {
  require_scalar(alpha, "pdc alpha");
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  if (!spec.is_depthwise(xv.c()) || wv.n() != xv.c()) {
    throw DimensionError("pdc: channel axis " + std::to_string(xv.c()) +
                         " does not match depthwise weight with " + std::to_string(wv.n()) +
                         " channels / groups " + std::to_string(spec.groups));
  }
  if (spec.stride != 1) throw ConfigError("pdc requires stride 1");
  check_conv_shapes(xv.shape(), wv.shape(), spec, nullptr);
  const T a = alpha.value()[0];
  const std::vector<T> sums = kernel_sums(wv);

  Tensor<T> out(xv.shape());
  if (mode == PdcMode::rewritten) {
    out = pdconv::conv2d(xv, ConvWeights<T>{wv, std::nullopt}, spec);
    parallel_for(xv.n() * xv.c(), [&](std::int64_t slab) {
      const std::int64_t c = slab % xv.c();
      const T coef = a * sums[c];
      const T* src = xv.ptr() + slab * xv.shape().plane();
      T* dst = out.ptr() + slab * xv.shape().plane();
      for (std::int64_t i = 0; i < xv.shape().plane(); ++i) dst[i] -= coef * src[i];
    });
  } else {
    // Literal blend of the difference and vanilla aggregations. Out-of-image
    // neighbours read as zero, matching the zero padding of conv2d.
    const std::int64_t height = xv.h();
    const std::int64_t width = xv.w();
    const int ph = spec.pad_h();
    const int pw = spec.pad_w();
    parallel_for(xv.n() * xv.c(), [&](std::int64_t slab) {
      const std::int64_t n = slab / xv.c();
      const std::int64_t c = slab % xv.c();
      const T* src = xv.plane(n, c);
      const T* wk = wv.plane(c, 0);
      T* dst = out.plane(n, c);
      for (std::int64_t oy = 0; oy < height; ++oy) {
        for (std::int64_t ox = 0; ox < width; ++ox) {
          const T center = src[oy * width + ox];
          T diff{0};
          T vanilla{0};
          for (int ky = 0; ky < spec.kh; ++ky) {
            const std::int64_t iy = oy + static_cast<std::int64_t>(ky) * spec.dilation - ph;
            for (int kx = 0; kx < spec.kw; ++kx) {
              const std::int64_t ix = ox + static_cast<std::int64_t>(kx) * spec.dilation - pw;
              const bool inside = iy >= 0 && iy < height && ix >= 0 && ix < width;
              const T neighbour = inside ? src[iy * width + ix] : T{0};
              const T wtap = wk[ky * spec.kw + kx];
              diff += wtap * (neighbour - center);
              vanilla += wtap * neighbour;
            }
          }
          dst[oy * width + ox] = a * diff + (T{1} - a) * vanilla;
        }
      }
    });
  }

  const char* name = mode == PdcMode::rewritten ? "pdc" : "pdc_definitional";
  return make_op<T>(name, std::move(out), {x, weight, alpha}, [spec](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const Tensor<T>& xin = self.parents[0]->value;
    const Tensor<T>& w = self.parents[1]->value;
    const T av = self.parents[2]->value[0];
    const std::vector<T> s = kernel_sums(w);
    const std::int64_t plane = xin.shape().plane();
    const std::int64_t channels = xin.c();

    // Per-channel correlation sum_{n,p} g * x, shared by the weight and alpha
    // gradients.
    std::vector<T> gx(static_cast<std::size_t>(channels), T{0});
    for (std::int64_t n = 0; n < xin.n(); ++n) {
      for (std::int64_t c = 0; c < channels; ++c) {
        const T* gp = g.plane(n, c);
        const T* xp = xin.plane(n, c);
        T acc{0};
        for (std::int64_t i = 0; i < plane; ++i) acc += gp[i] * xp[i];
        gx[c] += acc;
      }
    }

    if (wants(self, 0)) {
      Tensor<T> dx = conv2d_grad_input(g, w, spec, xin.shape());
      for (std::int64_t n = 0; n < xin.n(); ++n) {
        for (std::int64_t c = 0; c < channels; ++c) {
          const T coef = av * s[c];
          const T* gp = g.plane(n, c);
          T* dp = dx.plane(n, c);
          for (std::int64_t i = 0; i < plane; ++i) dp[i] -= coef * gp[i];
        }
      }
      self.parents[0]->accumulate(dx);
    }
    if (wants(self, 1)) {
      Tensor<T>& gw = self.parents[1]->grad_buffer();
      conv2d_grad_weight<T>(g, xin, spec, gw, nullptr);
      const std::int64_t taps = w.h() * w.w();
      for (std::int64_t c = 0; c < channels; ++c) {
        T* gp = gw.plane(c, 0);
        for (std::int64_t k = 0; k < taps; ++k) gp[k] -= av * gx[c];
      }
    }
    if (wants(self, 2)) {
      T acc{0};
      for (std::int64_t c = 0; c < channels; ++c) acc -= gx[c] * s[c];
      self.parents[2]->grad_buffer()[0] += acc;
    }
  });
}

template <typename T>
Var<T> standardize(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps) {
  const Tensor<T>& xv = x.value();
  const std::int64_t channels = xv.c();
  const Shape affine{1, channels, 1, 1};
  require_same_shape(gamma.shape(), affine, "standardize gamma");
  require_same_shape(beta.shape(), affine, "standardize beta");
  const std::int64_t plane = xv.shape().plane();
  const std::int64_t slabs = xv.n() * channels;

  Tensor<T> normalized(xv.shape());
  std::vector<T> inv_std(static_cast<std::size_t>(slabs));
  Tensor<T> out(xv.shape());
  parallel_for(slabs, [&](std::int64_t slab) {
    const std::int64_t c = slab % channels;
    const T* src = xv.ptr() + slab * plane;
    T* nrm = normalized.ptr() + slab * plane;
    T* dst = out.ptr() + slab * plane;
    T mu{0};
    for (std::int64_t i = 0; i < plane; ++i) mu += src[i];
    mu /= static_cast<T>(plane);
    T var{0};
    for (std::int64_t i = 0; i < plane; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<T>(plane);
    const T inv = T{1} / std::sqrt(var + static_cast<T>(eps));
    inv_std[slab] = inv;
    const T gmul = gamma.value()[c];
    const T badd = beta.value()[c];
    for (std::int64_t i = 0; i < plane; ++i) {
      nrm[i] = (src[i] - mu) * inv;
      dst[i] = gmul * nrm[i] + badd;
    }
  });

  return make_op<T>(
      "standardize", std::move(out), {x, gamma, beta},
      [normalized = std::move(normalized), inv_std = std::move(inv_std)](Node<T>& self) {
        const Tensor<T>& g = self.grad;
        const Tensor<T>& gam = self.parents[1]->value;
        const std::int64_t ch = g.c();
        const std::int64_t pl = g.shape().plane();
        const std::int64_t count = g.n() * ch;
        if (wants(self, 0)) {
          Tensor<T>& gx = self.parents[0]->grad_buffer();
          parallel_for(count, [&](std::int64_t slab) {
            const std::int64_t c = slab % ch;
            const T* gp = g.ptr() + slab * pl;
            const T* nrm = normalized.ptr() + slab * pl;
            T* dst = gx.ptr() + slab * pl;
            T mean_g{0};
            T mean_gn{0};
            for (std::int64_t i = 0; i < pl; ++i) {
              mean_g += gp[i];
              mean_gn += gp[i] * nrm[i];
            }
            mean_g /= static_cast<T>(pl);
            mean_gn /= static_cast<T>(pl);
            const T k = gam[c] * inv_std[slab];
            for (std::int64_t i = 0; i < pl; ++i) dst[i] += k * (gp[i] - mean_g - nrm[i] * mean_gn);
          });
        }
        if (wants(self, 1) || wants(self, 2)) {
          std::vector<T> dg(static_cast<std::size_t>(ch), T{0});
          std::vector<T> db(static_cast<std::size_t>(ch), T{0});
          for (std::int64_t slab = 0; slab < count; ++slab) {
            const std::int64_t c = slab % ch;
            const T* gp = g.ptr() + slab * pl;
            const T* nrm = normalized.ptr() + slab * pl;
            T sg{0};
            T sgn{0};
            for (std::int64_t i = 0; i < pl; ++i) {
              sg += gp[i];
              sgn += gp[i] * nrm[i];
            }
            dg[c] += sgn;
            db[c] += sg;
          }
          if (wants(self, 1)) {
            Tensor<T>& gg = self.parents[1]->grad_buffer();
            for (std::int64_t c = 0; c < ch; ++c) gg[c] += dg[c];
          }
          if (wants(self, 2)) {
            Tensor<T>& gb = self.parents[2]->grad_buffer();
            for (std::int64_t c = 0; c < ch; ++c) gb[c] += db[c];
          }
        }
      });
}

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::int64_t out_h, std::int64_t out_w) {
  const Tensor<T>& xv = x.value();
  if (out_h < 1 || out_w < 1) throw DimensionError("upsample target must be positive");
  const auto rows = lerp_table(xv.h(), out_h);
  const auto cols = lerp_table(xv.w(), out_w);
  Tensor<T> out(Shape{xv.n(), xv.c(), out_h, out_w});
  const std::int64_t in_w = xv.w();
  parallel_for(xv.n() * xv.c(), [&](std::int64_t slab) {
    const T* src = xv.ptr() + slab * xv.shape().plane();
    T* dst = out.ptr() + slab * out_h * out_w;
    for (std::int64_t oy = 0; oy < out_h; ++oy) {
      const LerpTap& r = rows[oy];
      const T wy1 = static_cast<T>(r.w1);
      const T wy0 = T{1} - wy1;
      for (std::int64_t ox = 0; ox < out_w; ++ox) {
        const LerpTap& q = cols[ox];
        const T wx1 = static_cast<T>(q.w1);
        const T wx0 = T{1} - wx1;
        dst[oy * out_w + ox] = wy0 * (wx0 * src[r.i0 * in_w + q.i0] + wx1 * src[r.i0 * in_w + q.i1]) +
                               wy1 * (wx0 * src[r.i1 * in_w + q.i0] + wx1 * src[r.i1 * in_w + q.i1]);
      }
    }
  });
  return make_op<T>("upsample_bilinear", std::move(out), {x}, [rows, cols](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    Tensor<T>& gx = self.parents[0]->grad_buffer();
    const std::int64_t oh = g.h();
    const std::int64_t ow = g.w();
    const std::int64_t iw = gx.w();
    parallel_for(g.n() * g.c(), [&](std::int64_t slab) {
      const T* gp = g.ptr() + slab * oh * ow;
      T* dst = gx.ptr() + slab * gx.shape().plane();
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        const LerpTap& r = rows[oy];
        const T wy1 = static_cast<T>(r.w1);
        const T wy0 = T{1} - wy1;
        for (std::int64_t ox = 0; ox < ow; ++ox) {
          const LerpTap& q = cols[ox];
          const T wx1 = static_cast<T>(q.w1);
          const T wx0 = T{1} - wx1;
          const T v = gp[oy * ow + ox];
          dst[r.i0 * iw + q.i0] += wy0 * wx0 * v;
          dst[r.i0 * iw + q.i1] += wy0 * wx1 * v;
          dst[r.i1 * iw + q.i0] += wy1 * wx0 * v;
          dst[r.i1 * iw + q.i1] += wy1 * wx1 * v;
        }
      }
    });
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n) throw DimensionError("concat_channels: batch axis mismatch");
  if (sa.h != sb.h) throw DimensionError("concat_channels: height axis mismatch");
  if (sa.w != sb.w) throw DimensionError("concat_channels: width axis mismatch");
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::int64_t plane = sa.plane();
  for (std::int64_t n = 0; n < sa.n; ++n) {
    std::copy_n(a.value().plane(n, 0), sa.c * plane, out.plane(n, 0));
    std::copy_n(b.value().plane(n, 0), sb.c * plane, out.plane(n, sa.c));
  }
  return make_op<T>("concat_channels", std::move(out), {a, b}, [](Node<T>& self) {
    const Tensor<T>& g = self.grad;
    const std::int64_t ca = self.parents[0]->value.c();
    const std::int64_t cb = self.parents[1]->value.c();
    const std::int64_t pl = g.shape().plane();
    for (std::int64_t n = 0; n < g.n(); ++n) {
      if (wants(self, 0)) {
        T* dst = self.parents[0]->grad_buffer().plane(n, 0);
        const T* src = g.plane(n, 0);
        for (std::int64_t i = 0; i < ca * pl; ++i) dst[i] += src[i];
      }
      if (wants(self, 1)) {
        T* dst = self.parents[1]->grad_buffer().plane(n, 0);
        const T* src = g.plane(n, ca);
        for (std::int64_t i = 0; i < cb * pl; ++i) dst[i] += src[i];
      }
    }
  });
}

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const std::int32_t> labels) {
  const Tensor<T>& z = logits.value();
  const std::int64_t classes = z.c();
  const std::int64_t plane = z.shape().plane();
  const std::int64_t pixels = z.n() * plane;
  if (static_cast<std::int64_t>(labels.size()) != pixels) {
    throw DimensionError("cross_entropy: label count " + std::to_string(labels.size()) +
                         " does not match N*H*W = " + std::to_string(pixels));
  }
  for (std::int64_t i = 0; i < pixels; ++i) {
    if (labels[i] < 0 || labels[i] >= classes) {
      const std::int64_t n = i / plane;
      const std::int64_t y = (i % plane) / z.w();
      const std::int64_t x = i % z.w();
      throw DataError("label " + std::to_string(labels[i]) + " out of range [0," +
                      std::to_string(classes) + ") at pixel (n=" + std::to_string(n) +
                      ", h=" + std::to_string(y) + ", w=" + std::to_string(x) + ")");
    }
  }
  Tensor<T> prob(z.shape());
  // At least double precision for the running sum.
  using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;
  Acc total = 0;
  for (std::int64_t n = 0; n < z.n(); ++n) {
    for (std::int64_t p = 0; p < plane; ++p) {
      T zmax = z.plane(n, 0)[p];
      for (std::int64_t c = 1; c < classes; ++c) zmax = std::max(zmax, z.plane(n, c)[p]);
      T denom{0};
      for (std::int64_t c = 0; c < classes; ++c) {
        const T e = std::exp(z.plane(n, c)[p] - zmax);
        prob.plane(n, c)[p] = e;
        denom += e;
      }
      for (std::int64_t c = 0; c < classes; ++c) prob.plane(n, c)[p] /= denom;
      const std::int32_t label = labels[n * plane + p];
      total += static_cast<Acc>(zmax + std::log(denom) - z.plane(n, label)[p]);
    }
  }
  const T loss = static_cast<T>(total / static_cast<Acc>(pixels));
  std::vector<std::int32_t> owned(labels.begin(), labels.end());
  return make_op<T>(
      "cross_entropy", Tensor<T>::scalar(loss), {logits},
      [prob = std::move(prob), owned = std::move(owned)](Node<T>& self) {
        const T k = self.grad[0] / static_cast<T>(owned.size());
        Tensor<T>& gz = self.parents[0]->grad_buffer();
        const std::int64_t pl = prob.shape().plane();
        for (std::int64_t n = 0; n < prob.n(); ++n) {
          for (std::int64_t c = 0; c < prob.c(); ++c) {
            const T* pp = prob.plane(n, c);
            T* gp = gz.plane(n, c);
            for (std::int64_t p = 0; p < pl; ++p) {
              const T onehot = owned[n * pl + p] == c ? T{1} : T{0};
              gp[p] += k * (pp[p] - onehot);
            }
          }
        }
      });
}

#define PDCONV_INSTANTIATE(T)                                                                   \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&);         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                            \
  template Var<T> div(const Var<T>&, const Var<T>&);                                            \
  template Var<T> scale(const Var<T>&, double);                                                 \
  template Var<T> mul_scalar(const Var<T>&, const Var<T>&);                                     \
  template Var<T> sum(const Var<T>&);                                                           \
  template Var<T> mean(const Var<T>&);                                                          \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);                                \
  template Var<T> sigmoid(const Var<T>&);                                                       \
  template Var<T> relu(const Var<T>&);                                                          \
  template Var<T> pdc(const Var<T>&, const Var<T>&, const Var<T>&, const ConvSpec&, PdcMode);   \
  template Var<T> standardize(const Var<T>&, const Var<T>&, const Var<T>&, double);             \
  template Var<T> upsample_bilinear(const Var<T>&, std::int64_t, std::int64_t);                 \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);                                \
  template Var<T> cross_entropy(const Var<T>&, std::span<const std::int32_t>);

PDCONV_INSTANTIATE(float)
PDCONV_INSTANTIATE(double)
PDCONV_INSTANTIATE(long double)
#undef PDCONV_INSTANTIATE

}  // namespace pdconv::ag
