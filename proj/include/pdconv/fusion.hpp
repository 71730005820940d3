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

#include <string>

#include "pdconv/layers.hpp"

namespace pdconv {

/// Cross-modal fusion of one encoder stage:
///
///   eta * (G_rgb(H_rgb) * H_rgb + F_rgb) + lambda * (G_d(H_d) * H_d + F_d)
///
/// where F are the stage features, H the raw context features computed from
/// them and G the 1x1 gates. eta and lambda are independent, unconstrained
/// scalars.
template <typename T>
struct EcfLayer {
  Var<T> eta;
  Var<T> lambda;
  Pointwise<T> gate_rgb;
  Pointwise<T> gate_depth;

  /// eta = lambda = 0.5, fan-in uniform gates.
  static EcfLayer make(std::int64_t channels, Rng& rng) {
    return {Var<T>::leaf(Tensor<T>::scalar(T{0.5})), Var<T>::leaf(Tensor<T>::scalar(T{0.5})),
            Pointwise<T>::make(channels, channels, rng), Pointwise<T>::make(channels, channels, rng)};
  }

  void collect(ParamList<T>& out, const std::string& prefix) {
    out.push_back({prefix + ".eta", &eta});
    out.push_back({prefix + ".lambda", &lambda});
    gate_rgb.collect(out, prefix + ".gate_rgb");
    gate_depth.collect(out, prefix + ".gate_depth");
  }
};

template <typename T>
Var<T> ecf_fuse(const Var<T>& f_rgb, const Var<T>& f_depth, const Var<T>& hat_rgb,
                const Var<T>& hat_depth, const EcfLayer<T>& layer) {
  require_same_shape(f_rgb.shape(), f_depth.shape(), "ecf depth features");
  require_same_shape(f_rgb.shape(), hat_rgb.shape(), "ecf rgb context");
  require_same_shape(f_rgb.shape(), hat_depth.shape(), "ecf depth context");
  Var<T> rgb = ag::add(ag::mul(layer.gate_rgb(hat_rgb), hat_rgb), f_rgb);
  Var<T> depth = ag::add(ag::mul(layer.gate_depth(hat_depth), hat_depth), f_depth);
  return ag::add(ag::mul_scalar(rgb, layer.eta), ag::mul_scalar(depth, layer.lambda));
}

template <typename T>
Tensor<T> ecf_fuse(const Tensor<T>& f_rgb, const Tensor<T>& f_depth, const Tensor<T>& hat_rgb,
                   const Tensor<T>& hat_depth, const EcfLayer<T>& layer) {
  return eval_no_grad<T>([&] {
    return ecf_fuse(Var<T>::constant(f_rgb), Var<T>::constant(f_depth), Var<T>::constant(hat_rgb),
                    Var<T>::constant(hat_depth), layer);
  });
}

}  // namespace pdconv
