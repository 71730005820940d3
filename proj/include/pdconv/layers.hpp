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

#include <cmath>
#include <string>
#include <vector>

#include "pdconv/autograd.hpp"
#include "pdconv/ops.hpp"
#include "pdconv/random.hpp"

namespace pdconv {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T>* var;
};

template <typename T>
using ParamList = std::vector<NamedParam<T>>;

/// Centered uniform init with bound sqrt(3 / fan_in).
template <typename T>
Tensor<T> fan_in_uniform(Shape weight_shape, Rng& rng) {
  const double fan_in = static_cast<double>(weight_shape.c * weight_shape.h * weight_shape.w);
  const double bound = std::sqrt(3.0 / fan_in);
  return random_uniform<T>(weight_shape, rng, -bound, bound);
}

/// 1x1 channel mixing with bias.
template <typename T>
struct Pointwise {
  Var<T> weight;  // (out, in, 1, 1)
  Var<T> bias;    // (1, out, 1, 1)

  static Pointwise make(std::int64_t in, std::int64_t out, Rng& rng) {
    return {Var<T>::leaf(fan_in_uniform<T>(Shape{out, in, 1, 1}, rng)),
            Var<T>::leaf(Tensor<T>(Shape{1, out, 1, 1}))};
  }
  static Pointwise identity(std::int64_t channels) {
    Tensor<T> w(Shape{channels, channels, 1, 1});
    for (std::int64_t c = 0; c < channels; ++c) w(c, c, 0, 0) = T{1};
    return {Var<T>::leaf(std::move(w)), Var<T>::leaf(Tensor<T>(Shape{1, channels, 1, 1}))};
  }
  static Pointwise zeros(std::int64_t in, std::int64_t out) {
    return {Var<T>::leaf(Tensor<T>(Shape{out, in, 1, 1})), Var<T>::leaf(Tensor<T>(Shape{1, out, 1, 1}))};
  }

  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, weight, bias, ConvSpec::pointwise()); }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".weight", &weight});
    out.push_back({prefix + ".bias", &bias});
  }
};

/// Dense k x k convolution without bias.
template <typename T>
struct Conv {
  ConvSpec spec;
  Var<T> weight;

  static Conv make(std::int64_t in, std::int64_t out, int kernel, int stride, Rng& rng) {
    return {ConvSpec::dense(kernel, stride),
            Var<T>::leaf(fan_in_uniform<T>(Shape{out, in, kernel, kernel}, rng))};
  }
  Var<T> operator()(const Var<T>& x) const { return ag::conv2d(x, weight, Var<T>{}, spec); }
  void collect(ParamList<T>& out, const std::string& prefix) { out.push_back({prefix + ".weight", &weight}); }
};

/// Spatial standardization with a per-channel affine map.
template <typename T>
struct Norm {
  Var<T> gamma;
  Var<T> beta;

  static Norm make(std::int64_t channels) {
    return {Var<T>::leaf(Tensor<T>(Shape{1, channels, 1, 1}, T{1})),
            Var<T>::leaf(Tensor<T>(Shape{1, channels, 1, 1}))};
  }
  Var<T> operator()(const Var<T>& x) const { return ag::standardize(x, gamma, beta); }
  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".gamma", &gamma});
    out.push_back({prefix + ".beta", &beta});
  }
};

/// Evaluates a graph-building forward on plain tensors.
template <typename T, typename Fn>
Tensor<T> eval_no_grad(Fn&& fn) {
  NoGradGuard guard;
  return fn().value();
}

}  // namespace pdconv
