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

#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "pdconv/tensor.hpp"

namespace pdconv {

enum class Padding { same, explicit_pad };

/// Kernel geometry shared by every conv-like op.
struct ConvSpec {
  int kh = 3;
  int kw = 3;
  int dilation = 1;
  int stride = 1;
  Padding padding = Padding::same;
  int ph = 0;  // used only with Padding::explicit_pad
  int pw = 0;
  int groups = 1;

  static ConvSpec depthwise(int kernel, int dilation, int channels) {
    return ConvSpec{kernel, kernel, dilation, 1, Padding::same, 0, 0, channels};
  }
  static ConvSpec pointwise() { return ConvSpec{1, 1, 1, 1, Padding::same, 0, 0, 1}; }
  static ConvSpec dense(int kernel, int stride = 1) {
    return ConvSpec{kernel, kernel, 1, stride, Padding::same, 0, 0, 1};
  }

  int extent_h() const { return (kh - 1) * dilation + 1; }
  int extent_w() const { return (kw - 1) * dilation + 1; }
  int pad_h() const { return padding == Padding::same ? (extent_h() - 1) / 2 : ph; }
  int pad_w() const { return padding == Padding::same ? (extent_w() - 1) / 2 : pw; }
  std::int64_t out_h(std::int64_t h) const { return (h + 2 * pad_h() - extent_h()) / stride + 1; }
  std::int64_t out_w(std::int64_t w) const { return (w + 2 * pad_w() - extent_w()) / stride + 1; }

  bool is_depthwise(std::int64_t channels) const { return groups == channels; }
  bool is_pointwise() const { return groups == 1 && kh == 1 && kw == 1; }

  /// Throws ConfigError on even / non-positive kernel, dilation, stride, groups.
  void validate() const;
  std::string str() const;
};

/// Weight layout (out, in/groups, kh, kw); bias layout (1, out, 1, 1).
template <typename T>
struct ConvWeights {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
};

/// Checks channel/group/kernel consistency between input, weights and spec.
void check_conv_shapes(const Shape& input, const Shape& weight, const ConvSpec& spec,
                       const Shape* bias);

/// Zero-padded cross-correlation: y(p0) = sum_{pn} w(pn) x(p0 + pn).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvWeights<T>& weights, const ConvSpec& spec);

/// 1x1, groups = 1 channel mixing.
template <typename T>
Tensor<T> pointwise_conv(const Tensor<T>& input, const ConvWeights<T>& weights);

/// dL/dx for conv2d given dL/dy.
template <typename T>
Tensor<T> conv2d_grad_input(const Tensor<T>& grad_out, const Tensor<T>& weight,
                            const ConvSpec& spec, const Shape& input_shape);

/// Accumulates dL/dw (and dL/db if non-null) into the given buffers.
template <typename T>
void conv2d_grad_weight(const Tensor<T>& grad_out, const Tensor<T>& input, const ConvSpec& spec,
                        Tensor<T>& grad_weight, Tensor<T>* grad_bias);

enum class ElementwiseOp { mul, add, sub, div };

template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, const Tensor<T>& b);

/// Tensor-scalar form; `scale` is ElementwiseOp::mul with a scalar.
template <typename T>
Tensor<T> elementwise(ElementwiseOp op, const Tensor<T>& a, T b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return elementwise(ElementwiseOp::mul, a, factor);
}

/// Multiply-accumulate count: out_h * out_w * out * (in / groups) * kh * kw.
std::int64_t flop_count(const ConvSpec& spec, std::int64_t channels_in, std::int64_t channels_out,
                        std::int64_t height, std::int64_t width);

}  // namespace pdconv
