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
#include <span>

#include "pdconv/autograd.hpp"
#include "pdconv/conv.hpp"

namespace pdconv::ag {

/// `bias` may be an undefined Var.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, const ConvSpec& spec);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> div(const Var<T>& a, const Var<T>& b);

/// a * factor with a constant factor.
template <typename T>
Var<T> scale(const Var<T>& a, double factor);

/// a * s where s is a one-element Var (alpha, eta, lambda).
template <typename T>
Var<T> mul_scalar(const Var<T>& a, const Var<T>& s);

template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

/// sum(a * weights) for a constant weight tensor.
template <typename T>
Var<T> weighted_sum(const Var<T>& a, const Tensor<T>& weights);

template <typename T>
Var<T> sigmoid(const Var<T>& a);
template <typename T>
Var<T> relu(const Var<T>& a);

enum class PdcMode { definitional, rewritten };

/// Depthwise pixel-difference convolution.
///   definitional: alpha * sum w (x(p0+pn) - x(p0)) + (1 - alpha) * sum w x(p0+pn)
///   rewritten:    sum w x(p0+pn) - alpha * x(p0) * sum w
/// `alpha` is the effective blend weight as a one-element Var.
template <typename T>
Var<T> pdc(const Var<T>& x, const Var<T>& weight, const Var<T>& alpha, const ConvSpec& spec,
           PdcMode mode);

/// Per-(sample, channel) standardization over the spatial axes followed by a
/// per-channel affine map. gamma / beta have shape (1, C, 1, 1).
template <typename T>
Var<T> standardize(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

/// Bilinear resize with half-pixel centers (align_corners = false).
template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::int64_t out_h, std::int64_t out_w);

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

/// Mean over all N*H*W pixels of -log softmax(logits)[label]. `labels` is
/// laid out (n, h, w) row major.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const std::int32_t> labels);

}  // namespace pdconv::ag
