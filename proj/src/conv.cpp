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

#include "pdconv/conv.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <vector>

#include "pdconv/parallel.hpp"

namespace pdconv {
namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

// Valid output-column range [lo, hi) for kernel column offset `off` such that
// ox * stride + off lands inside [0, width).
struct ColumnRange {
  std::int64_t lo;
  std::int64_t hi;
};

ColumnRange valid_columns(std::int64_t off, std::int64_t stride, std::int64_t width,
                          std::int64_t out_width) {
  std::int64_t lo = 0;
  if (off < 0) lo = std::min(out_width, (-off + stride - 1) / stride);
  std::int64_t hi = out_width;
  // largest ox with ox * stride + off <= width - 1
  const std::int64_t last = width - 1 - off;
  if (last < 0) return {0, 0};
  hi = std::min(hi, last / stride + 1);
  return {lo, std::max(lo, hi)};
}

bool uses_gemm(const ConvSpec& spec) { return spec.groups == 1; }

// Column matrix for one sample: rows (ci, ky, kx), columns output pixels.
template <typename T>
void im2col(const T* in, std::int64_t channels, std::int64_t height, std::int64_t width,
            const ConvSpec& spec, std::int64_t out_h, std::int64_t out_w, T* col) {
  const std::int64_t plane = out_h * out_w;
  const int ph = spec.pad_h();
  const int pw = spec.pad_w();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < channels; ++c) {
    const T* src = in + c * height * width;
    for (int ky = 0; ky < spec.kh; ++ky) {
      for (int kx = 0; kx < spec.kw; ++kx, ++row) {
        T* dst = col + row * plane;
        const std::int64_t xoff = static_cast<std::int64_t>(kx) * spec.dilation - pw;
        const ColumnRange cols = valid_columns(xoff, spec.stride, width, out_w);
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          T* drow = dst + oy * out_w;
          const std::int64_t iy = oy * spec.stride + static_cast<std::int64_t>(ky) * spec.dilation - ph;
          if (iy < 0 || iy >= height) {
            std::fill(drow, drow + out_w, T{0});
            continue;
          }
          const T* srow = src + iy * width;
          std::fill(drow, drow + cols.lo, T{0});
          if (spec.stride == 1) {
            std::copy(srow + cols.lo + xoff, srow + cols.hi + xoff, drow + cols.lo);
          } else {
            for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] = srow[ox * spec.stride + xoff];
          }
          std::fill(drow + cols.hi, drow + out_w, T{0});
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::int64_t channels, std::int64_t height, std::int64_t width,
                const ConvSpec& spec, std::int64_t out_h, std::int64_t out_w, T* out) {
  const std::int64_t plane = out_h * out_w;
  const int ph = spec.pad_h();
  const int pw = spec.pad_w();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < channels; ++c) {
    T* dst = out + c * height * width;
    for (int ky = 0; ky < spec.kh; ++ky) {
      for (int kx = 0; kx < spec.kw; ++kx, ++row) {
        const T* src = col + row * plane;
        const std::int64_t xoff = static_cast<std::int64_t>(kx) * spec.dilation - pw;
        const ColumnRange cols = valid_columns(xoff, spec.stride, width, out_w);
        for (std::int64_t oy = 0; oy < out_h; ++oy) {
          const std::int64_t iy = oy * spec.stride + static_cast<std::int64_t>(ky) * spec.dilation - ph;
          if (iy < 0 || iy >= height) continue;
          T* drow = dst + iy * width;
          const T* srow = src + oy * out_w;
          for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox * spec.stride + xoff] += srow[ox];
        }
      }
    }
  }
}

// Grouped convolution by direct loops. Accumulation per output element runs
// over (ci, ky, kx) in row-major order.
template <typename T>
void direct_forward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                    Tensor<T>& out) {
  const std::int64_t n_batch = input.n();
  const std::int64_t height = input.h();
  const std::int64_t width = input.w();
  const std::int64_t cout = out.c();
  const std::int64_t cin_g = weight.c();
  const std::int64_t cout_g = cout / spec.groups;
  const std::int64_t out_h = out.h();
  const std::int64_t out_w = out.w();
  const int ph = spec.pad_h();
  const int pw = spec.pad_w();

  parallel_for(n_batch * cout, [&](std::int64_t slab) {
    const std::int64_t n = slab / cout;
    const std::int64_t co = slab % cout;
    const std::int64_t g = co / cout_g;
    T* dst = out.plane(n, co);
    for (std::int64_t cl = 0; cl < cin_g; ++cl) {
      const T* src = input.plane(n, g * cin_g + cl);
      const T* wk = weight.plane(co, cl);
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          const T wv = wk[ky * spec.kw + kx];
          const std::int64_t xoff = static_cast<std::int64_t>(kx) * spec.dilation - pw;
          const ColumnRange cols = valid_columns(xoff, spec.stride, width, out_w);
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const std::int64_t iy = oy * spec.stride + static_cast<std::int64_t>(ky) * spec.dilation - ph;
            if (iy < 0 || iy >= height) continue;
            T* drow = dst + oy * out_w;
            const T* srow = src + iy * width + xoff;
            if (spec.stride == 1) {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] += wv * srow[ox];
            } else {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] += wv * srow[ox * spec.stride];
            }
          }
        }
      }
    }
  });
}

template <typename T>
void direct_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight, const ConvSpec& spec,
                       Tensor<T>& grad_in) {
  const std::int64_t n_batch = grad_in.n();
  const std::int64_t cin = grad_in.c();
  const std::int64_t height = grad_in.h();
  const std::int64_t width = grad_in.w();
  const std::int64_t cin_g = weight.c();
  const std::int64_t cout_g = grad_out.c() / spec.groups;
  const std::int64_t out_h = grad_out.h();
  const std::int64_t out_w = grad_out.w();
  const int ph = spec.pad_h();
  const int pw = spec.pad_w();

  parallel_for(n_batch * cin, [&](std::int64_t slab) {
    const std::int64_t n = slab / cin;
    const std::int64_t ci = slab % cin;
    const std::int64_t g = ci / cin_g;
    const std::int64_t cl = ci % cin_g;
    T* dst = grad_in.plane(n, ci);
    for (std::int64_t co = g * cout_g; co < (g + 1) * cout_g; ++co) {
      const T* dy = grad_out.plane(n, co);
      const T* wk = weight.plane(co, cl);
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          const T wv = wk[ky * spec.kw + kx];
          const std::int64_t xoff = static_cast<std::int64_t>(kx) * spec.dilation - pw;
          const ColumnRange cols = valid_columns(xoff, spec.stride, width, out_w);
          for (std::int64_t oy = 0; oy < out_h; ++oy) {
            const std::int64_t iy = oy * spec.stride + static_cast<std::int64_t>(ky) * spec.dilation - ph;
            if (iy < 0 || iy >= height) continue;
            T* drow = dst + iy * width + xoff;
            const T* srow = dy + oy * out_w;
            if (spec.stride == 1) {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox] += wv * srow[ox];
            } else {
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) drow[ox * spec.stride] += wv * srow[ox];
            }
          }
        }
      }
    }
  });
}

template <typename T>
void direct_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvSpec& spec,
                        Tensor<T>& grad_weight) {
  const std::int64_t n_batch = input.n();
  const std::int64_t height = input.h();
  const std::int64_t width = input.w();
  const std::int64_t cout = grad_out.c();
  const std::int64_t cin_g = grad_weight.c();
  const std::int64_t cout_g = cout / spec.groups;
  const std::int64_t out_h = grad_out.h();
  const std::int64_t out_w = grad_out.w();
  const int ph = spec.pad_h();
  const int pw = spec.pad_w();

  parallel_for(cout, [&](std::int64_t co) {
    const std::int64_t g = co / cout_g;
    for (std::int64_t cl = 0; cl < cin_g; ++cl) {
      T* gw = grad_weight.plane(co, cl);
      for (int ky = 0; ky < spec.kh; ++ky) {
        for (int kx = 0; kx < spec.kw; ++kx) {
          const std::int64_t xoff = static_cast<std::int64_t>(kx) * spec.dilation - pw;
          const ColumnRange cols = valid_columns(xoff, spec.stride, width, out_w);
          T acc{0};
          for (std::int64_t n = 0; n < n_batch; ++n) {
            const T* dy = grad_out.plane(n, co);
            const T* src = input.plane(n, g * cin_g + cl);
            for (std::int64_t oy = 0; oy < out_h; ++oy) {
              const std::int64_t iy = oy * spec.stride + static_cast<std::int64_t>(ky) * spec.dilation - ph;
              if (iy < 0 || iy >= height) continue;
              const T* srow = src + iy * width + xoff;
              const T* drow = dy + oy * out_w;
              for (std::int64_t ox = cols.lo; ox < cols.hi; ++ox) acc += drow[ox] * srow[ox * spec.stride];
            }
          }
          gw[ky * spec.kw + kx] += acc;
        }
      }
    }
  });
}

template <typename T>
void gemm_forward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                  Tensor<T>& out) {
  const std::int64_t cin = input.c();
  const std::int64_t cout = out.c();
  const std::int64_t k = cin * spec.kh * spec.kw;
  const std::int64_t pixels = out.h() * out.w();
  const bool direct_1x1 = spec.kh == 1 && spec.kw == 1 && spec.stride == 1 && spec.pad_h() == 0 &&
                          spec.pad_w() == 0;
  ConstMatMap<T> w(weight.ptr(), cout, k);
  parallel_for(input.n(), [&](std::int64_t n) {
    MatMap<T> y(out.plane(n, 0), cout, pixels);
    if (direct_1x1) {
      ConstMatMap<T> x(input.plane(n, 0), cin, pixels);
      y.noalias() += w * x;
    } else {
      std::vector<T> col(static_cast<std::size_t>(k * pixels));
      im2col(input.plane(n, 0), cin, input.h(), input.w(), spec, out.h(), out.w(), col.data());
      ConstMatMap<T> x(col.data(), k, pixels);
      y.noalias() += w * x;
    }
  });
}

template <typename T>
void gemm_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight, const ConvSpec& spec,
                     Tensor<T>& grad_in) {
  const std::int64_t cin = grad_in.c();
  const std::int64_t cout = grad_out.c();
  const std::int64_t k = cin * spec.kh * spec.kw;
  const std::int64_t pixels = grad_out.h() * grad_out.w();
  const bool direct_1x1 = spec.kh == 1 && spec.kw == 1 && spec.stride == 1 && spec.pad_h() == 0 &&
                          spec.pad_w() == 0;
  ConstMatMap<T> w(weight.ptr(), cout, k);
  parallel_for(grad_in.n(), [&](std::int64_t n) {
    ConstMatMap<T> dy(grad_out.plane(n, 0), cout, pixels);
    if (direct_1x1) {
      MatMap<T> dx(grad_in.plane(n, 0), cin, pixels);
      dx.noalias() += w.transpose() * dy;
    } else {
      RowMatrix<T> col = w.transpose() * dy;
      col2im_add(col.data(), cin, grad_in.h(), grad_in.w(), spec, grad_out.h(), grad_out.w(),
                 grad_in.plane(n, 0));
    }
  });
}

template <typename T>
void gemm_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvSpec& spec,
                      Tensor<T>& grad_weight) {
  const std::int64_t cin = input.c();
  const std::int64_t cout = grad_out.c();
  const std::int64_t k = cin * spec.kh * spec.kw;
  const std::int64_t pixels = grad_out.h() * grad_out.w();
  const bool direct_1x1 = spec.kh == 1 && spec.kw == 1 && spec.stride == 1 && spec.pad_h() == 0 &&
                          spec.pad_w() == 0;
  MatMap<T> gw(grad_weight.ptr(), cout, k);
  std::vector<T> col;
  if (!direct_1x1) col.resize(static_cast<std::size_t>(k * pixels));
  // Batch reduction stays sequential so the summation order is fixed.
  for (std::int64_t n = 0; n < input.n(); ++n) {
    ConstMatMap<T> dy(grad_out.plane(n, 0), cout, pixels);
    if (direct_1x1) {
      ConstMatMap<T> x(input.plane(n, 0), cin, pixels);
      gw.noalias() += dy * x.transpose();
    } else {
      im2col(input.plane(n, 0), cin, input.h(), input.w(), spec, grad_out.h(), grad_out.w(), col.data());
      ConstMatMap<T> x(col.data(), k, pixels);
      gw.noalias() += dy * x.transpose();
    }
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (kh <= 0 || kw <= 0 || kh % 2 == 0 || kw % 2 == 0) {
    throw ConfigError("kernel must be odd and positive, got " + std::to_string(kh) + "x" +
                      std::to_string(kw));
  }
  if (dilation <= 0) throw ConfigError("dilation must be positive, got " + std::to_string(dilation));
  if (stride <= 0) throw ConfigError("stride must be positive, got " + std::to_string(stride));
  if (groups <= 0) throw ConfigError("groups must be positive, got " + std::to_string(groups));
  if (padding == Padding::explicit_pad && (ph < 0 || pw < 0)) {
    throw ConfigError("padding must be non-negative");
  }
}

std::string ConvSpec::str() const {
  return std::to_string(kh) + "x" + std::to_string(kw) + " d" + std::to_string(dilation) + " s" +
         std::to_string(stride) + " g" + std::to_string(groups);
}

void check_conv_shapes(const Shape& input, const Shape& weight, const ConvSpec& spec,
                       const Shape* bias) {
  spec.validate();
  if (weight.h != spec.kh || weight.w != spec.kw) {
    throw DimensionError("weight kernel axes " + std::to_string(weight.h) + "x" +
                         std::to_string(weight.w) + " do not match spec " + spec.str());
  }
  if (input.c % spec.groups != 0) {
    throw DimensionError("input channel axis " + std::to_string(input.c) +
                         " is not divisible by groups " + std::to_string(spec.groups));
  }
  if (weight.n % spec.groups != 0) {
    throw DimensionError("weight output-channel axis " + std::to_string(weight.n) +
                         " is not divisible by groups " + std::to_string(spec.groups));
  }
  if (weight.c != input.c / spec.groups) {
    throw DimensionError("weight input-channel axis " + std::to_string(weight.c) + " expected " +
                         std::to_string(input.c / spec.groups));
  }
  if (spec.out_h(input.h) < 1 || spec.out_w(input.w) < 1) {
    throw DimensionError("spatial axes " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                         " too small for kernel extent");
  }
  if (bias != nullptr && (bias->n != 1 || bias->c != weight.n || bias->h != 1 || bias->w != 1)) {
    throw DimensionError("bias shape " + bias->str() + " expected (1," + std::to_string(weight.n) +
                         ",1,1)");
  }
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvWeights<T>& weights, const ConvSpec& spec) {
  const Shape* bias_shape = weights.bias ? &weights.bias->shape() : nullptr;
  check_conv_shapes(input.shape(), weights.weight.shape(), spec, bias_shape);
  Tensor<T> out(Shape{input.n(), weights.weight.n(), spec.out_h(input.h()), spec.out_w(input.w())});
  if (weights.bias) {
    for (std::int64_t n = 0; n < out.n(); ++n) {
      for (std::int64_t c = 0; c < out.c(); ++c) {
        std::fill(out.plane(n, c), out.plane(n, c) + out.shape().plane(), (*weights.bias)[c]);
      }
    }
  }
  if (uses_gemm(spec)) {
    gemm_forward(input, weights.weight, spec, out);
  } else {
    direct_forward(input, weights.weight, spec, out);
  }
  return out;
}

template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const ConvWeights<T>& weights) {
  if (weights.weight.h() != 1 || weights.weight.w() != 1) {
    throw ConfigError("pointwise_conv requires a 1x1 kernel, got " + std::to_string(weights.weight.h()) +
                      "x" + std::to_string(weights.weight.w()));
  }
  return conv2d(input, weights, ConvSpec::pointwise());
}

template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight, const ConvSpec& spec,
                            const Shape& input_shape) {
  Tensor<T> grad_in(input_shape);
  if (uses_gemm(spec)) {
    gemm_grad_input(grad_out, weight, spec, grad_in);
  } else {
    direct_grad_input(grad_out, weight, spec, grad_in);
  }
  return grad_in;
}

template <typename T>
void conv2d_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvSpec& spec,
                        Tensor<T>& grad_weight, Tensor<T>* grad_bias) {
  if (uses_gemm(spec)) {
    gemm_grad_weight(grad_out, input, spec, grad_weight);
  } else {
    direct_grad_weight(grad_out, input, spec, grad_weight);
  }
  if (grad_bias != nullptr) {
    for (std::int64_t c = 0; c < grad_out.c(); ++c) {
      T acc{0};
      for (std::int64_t n = 0; n < grad_out.n(); ++n) {
        const T* p = grad_out.plane(n, c);
        for (std::int64_t i = 0; i < grad_out.shape().plane(); ++i) acc += p[i];
      }
      (*grad_bias)[c] += acc;
    }
  }
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a.shape(), b.shape(), "elementwise");
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  const T* pb = b.ptr();
  T* po = out.ptr();
  const std::int64_t n = a.size();
  switch (op) {
    case ElementwiseOp::mul:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
      break;
    case ElementwiseOp::add:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
      break;
    case ElementwiseOp::sub:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i];
      break;
    case ElementwiseOp::div:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] / pb[i];
      break;
  }
  return out;
}

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b) {
  Tensor<T> out(a.shape());
  const T* pa = a.ptr();
  T* po = out.ptr();
  const std::int64_t n = a.size();
  switch (op) {
    case ElementwiseOp::mul:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] * b;
      break;
    case ElementwiseOp::add:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + b;
      break;
    case ElementwiseOp::sub:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] - b;
      break;
    case ElementwiseOp::div:
      for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] / b;
      break;
  }
  return out;
}

std::int64_t flop_count(const ConvSpec& spec, std::int64_t channels_in, std::int64_t channels_out,
                        std::int64_t height, std::int64_t width) {
  return spec.out_h(height) * spec.out_w(width) * channels_out * (channels_in / spec.groups) * spec.kh * spec.kw;
}

#define PDCONV_INSTANTIATE(T)                                                                      \
  template Tensor<T> conv2d(const Tensor<T>&, const ConvWeights<T>&, const ConvSpec&);             \
  template Tensor<T> pointwise_conv(const Tensor<T>&, const ConvWeights<T>&);                      \
  template Tensor<T> conv2d_grad_input(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,        \
                                       const Shape&);                                              \
  template void conv2d_grad_weight(const Tensor<T>&, const Tensor<T>&, const ConvSpec&, Tensor<T>&, \
                                   Tensor<T>*);                                                    \
  template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> elementwise(ElementwiseOp, const Tensor<T>&, T);

PDCONV_INSTANTIATE(float)
PDCONV_INSTANTIATE(double)
PDCONV_INSTANTIATE(long double)
#undef PDCONV_INSTANTIATE

}  // namespace pdconv
