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

// Cascade large kernel (depthwise 5x5 -> depthwise 7x7 dilation 3 -> 1x1),
// its parallel-mode counterpart, the PDC cascade built from it, and the
// receptive-field measurement backing the cascade-vs-parallel comparison.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdconv/pdc.hpp"

namespace pdconv {

inline constexpr int kLocalKernel = 5;
inline constexpr int kLocalDilation = 1;
inline constexpr int kLongKernel = 7;
inline constexpr int kLongDilation = 3;

template <typename T>
struct ClkLayer {
  ConvSpec local_spec;
  ConvSpec long_spec;
  Var<T> local;       // (C, 1, 5, 5)
  Var<T> long_range;  // (C, 1, 7, 7)
  Pointwise<T> pw;

  static ClkLayer make(std::int64_t channels, Rng& rng);
  /// Center-tap kernels and identity mixing.
  static ClkLayer identity(std::int64_t channels);

  std::int64_t channels() const { return local.value().n(); }
  void collect(ParamList<T>& out, const std::string& prefix);
};

/// pw(dw_long(dw_local(x))).
template <typename T>
Var<T> clk_forward(const Var<T>& x, const ClkLayer<T>& layer);

/// pw(dw_local(x) + dw_long(x)).
template <typename T>
Var<T> parallel_forward(const Var<T>& x, const ClkLayer<T>& layer);

template <typename T>
struct CpdcLayer {
  PdcKernel<T> stage5;  // 5x5, dilation 1
  PdcKernel<T> stage7;  // 7x7, dilation 3
  Pointwise<T> gate;

  static CpdcLayer make(std::int64_t channels, Rng& rng);
  void collect(ParamList<T>& out, const std::string& prefix);
};

/// F_out = PDC_7x7(PDC_5x5(F)); no gate between the stages.
template <typename T>
Var<T> cpdc_features(const Var<T>& x, const PdcKernel<T>& stage5, const PdcKernel<T>& stage7);

/// Conv1x1(F_out) * F.
template <typename T>
Var<T> cpdc_forward(const Var<T>& x, const CpdcLayer<T>& layer);

template <typename T>
Tensor<T> clk_forward(const Tensor<T>& x, const ClkLayer<T>& layer) {
  return eval_no_grad<T>([&] { return clk_forward(Var<T>::constant(x), layer); });
}
template <typename T>
Tensor<T> parallel_forward(const Tensor<T>& x, const ClkLayer<T>& layer) {
  return eval_no_grad<T>([&] { return parallel_forward(Var<T>::constant(x), layer); });
}
template <typename T>
Tensor<T> cpdc_forward(const Tensor<T>& x, const CpdcLayer<T>& layer) {
  return eval_no_grad<T>([&] { return cpdc_forward(Var<T>::constant(x), layer); });
}

// ---------------------------------------------------------------------------
// Receptive fields

enum class RfMode { single5, single7d3, cascade, parallel, cpdc };

std::string to_string(RfMode mode);
std::optional<RfMode> parse_rf_mode(const std::string& name);

/// Per-pixel usage counts around one output location, indexed by offset
/// (dy, dx) in [-radius, radius].
struct SupportMap {
  RfMode mode = RfMode::single5;
  int radius = 0;
  std::vector<std::int64_t> counts;

  int side() const { return 2 * radius + 1; }
  std::int64_t at(int dy, int dx) const {
    return counts[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))];
  }
  std::int64_t& at(int dy, int dx) {
    return counts[static_cast<std::size_t>((dy + radius) * side() + (dx + radius))];
  }

  struct Box {
    int top;
    int left;
    int bottom;
    int right;
  };
  /// Bounding box of the nonzero cells, in offsets.
  Box bounds() const;
  int extent_h() const;
  int extent_w() const;
  /// Zero cells inside the bounding box.
  std::int64_t holes() const;
  /// Every nonzero cell of `inner` is nonzero here.
  bool contains(const SupportMap& inner) const;
  bool operator==(const SupportMap&) const = default;
};

/// Radius large enough for every mode (cascade reaches offset 11).
inline constexpr int kSupportRadius = 12;

/// Measures the support by back-propagating a unit impulse at the center of
/// the output through an all-ones probe of the given mode.
SupportMap receptive_field(RfMode mode);

/// The same map from the convolution of kernel indicator grids.
SupportMap analytic_support(RfMode mode);

/// Heat map, one character per offset; '.' marks zero.
std::string render_ascii(const SupportMap& map);

// ---------------------------------------------------------------------------
// Cost

/// MACs of the three CLK stages for C channels on an H x W map.
std::int64_t clk_flops(std::int64_t channels, std::int64_t height, std::int64_t width);
/// MACs of the two CLK depthwise stages only.
std::int64_t clk_depthwise_flops(std::int64_t channels, std::int64_t height, std::int64_t width);
/// MACs of a k x k depthwise conv plus a 1x1 pointwise conv.
std::int64_t large_kernel_flops(std::int64_t channels, std::int64_t height, std::int64_t width,
                                int kernel = 21);

}  // namespace pdconv
