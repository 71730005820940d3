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

// Pixel difference convolution.
//
// A depthwise kernel w aggregates both the intensities x(p0 + pn) and the
// differences x(p0 + pn) - x(p0), blended by alpha:
//
//   y(p0) = alpha * sum w(pn) (x(p0+pn) - x(p0)) + (1 - alpha) * sum w(pn) x(p0+pn)
//         = sum w(pn) x(p0+pn) - alpha * x(p0) * sum w(pn)
//
// The second line is what runs in production; the first is kept as
// PdcMode::definitional and serves as its oracle. The same w feeds both terms.

#pragma once

#include <string>

#include "pdconv/layers.hpp"

namespace pdconv {

using ag::PdcMode;

/// learnable: alpha = sigmoid(stored parameter). fixed: alpha = alpha_fixed.
enum class AlphaMode { learnable, fixed };

template <typename T>
struct PdcKernel {
  ConvSpec spec;
  Var<T> weight;  // (C, 1, k, k)
  Var<T> alpha;   // stored unconstrained value, one element
  AlphaMode alpha_mode = AlphaMode::learnable;
  double alpha_fixed = 0.5;
  PdcMode mode = PdcMode::rewritten;

  /// Depthwise kernel with fan-in uniform weights and stored alpha 0.
  static PdcKernel make(std::int64_t channels, int kernel, int dilation, Rng& rng);
  static PdcKernel fixed(std::int64_t channels, int kernel, int dilation, double alpha, Rng& rng) {
    PdcKernel k = make(channels, kernel, dilation, rng);
    k.alpha_mode = AlphaMode::fixed;
    k.alpha_fixed = alpha;
    return k;
  }

  std::int64_t channels() const { return weight.value().n(); }

  /// The stored alpha is listed only in learnable mode.
  void collect(ParamList<T>& out, const std::string& prefix);
};

/// PDC followed by the channel gate: O = Conv1x1(PDC(F)) * F.
template <typename T>
struct PdcLayer {
  PdcKernel<T> kernel;
  Pointwise<T> gate;

  /// Default geometry: 5x5, dilation 1.
  static PdcLayer make(std::int64_t channels, Rng& rng, int kernel = 5, int dilation = 1);

  void collect(ParamList<T>& out, const std::string& prefix);
};

/// Effective alpha as a graph value (so its gradient reaches the stored
/// parameter in learnable mode).
template <typename T>
Var<T> alpha_effective(const PdcKernel<T>& kernel);

template <typename T>
double alpha_value(const PdcKernel<T>& kernel) {
  NoGradGuard guard;
  return static_cast<double>(alpha_effective(kernel).value()[0]);
}

template <typename T>
Var<T> pdc_forward(const Var<T>& x, const PdcKernel<T>& kernel);

template <typename T>
Var<T> pdc_forward(const Var<T>& x, const PdcLayer<T>& layer) {
  return pdc_forward(x, layer.kernel);
}

template <typename T>
Var<T> pdc_gated(const Var<T>& x, const PdcLayer<T>& layer);

template <typename T>
Tensor<T> pdc_forward(const Tensor<T>& x, const PdcLayer<T>& layer) {
  return eval_no_grad<T>([&] { return pdc_forward(Var<T>::constant(x), layer.kernel); });
}

template <typename T>
Tensor<T> pdc_gated(const Tensor<T>& x, const PdcLayer<T>& layer) {
  return eval_no_grad<T>([&] { return pdc_gated(Var<T>::constant(x), layer); });
}

/// Cross-check of the definitional and rewritten forms on random instances:
/// kernels 5x5 d1 and 7x7 d3 alternate, C cycles through {1, 2, 8}, alpha is
/// uniform in [0, 1]. Deviations are max |def - rw| / max |def| per instance.
struct EquivalenceResult {
  int instances = 0;
  double max_dev_f32 = 0.0;
  double max_dev_f64 = 0.0;
  /// Largest pointwise |def - rw| / max(|def|, |rw|, 1e-12), for reference.
  double max_pointwise_f32 = 0.0;
  double max_pointwise_f64 = 0.0;

  static constexpr double kTolF32 = 1e-6;
  static constexpr double kTolF64 = 1e-12;
  bool passed() const { return max_dev_f32 <= kTolF32 && max_dev_f64 <= kTolF64; }
};

EquivalenceResult pdc_equivalence(int instances, std::uint64_t seed);

}  // namespace pdconv
