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

// Toy two-branch RGB-D segmentation network.
//
// Each branch: 3x3 stem at full resolution, then three stages (16/32/64
// channels by default), each a stride-2 transition followed by residual
// blocks. After every stage a context module produces raw features H from the
// stage output F of each branch, and an ECF layer fuses them; the fused map
// feeds the next RGB stage while the depth branch continues from its own F.
// The decoder projects stage-1 and stage-3 fused maps, upsamples the latter,
// concatenates, classifies with a 1x1 conv and upsamples to the input size.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pdconv/clk.hpp"
#include "pdconv/fusion.hpp"
#include "pdconv/io.hpp"

namespace pdconv {

/// Placement of the context operators.
///   full             : PDC on depth, CPDC on rgb
///   vanilla-baseline : plain depthwise 5x5 on depth, plain CLK cascade on rgb
///   swap             : CPDC on depth, PDC on rgb
///   pdc-only         : PDC on depth, plain cascade on rgb
///   cpdc-only        : plain depthwise 5x5 on depth, CPDC on rgb
/// "Plain" operators are PDC kernels with alpha fixed at 0, so every variant
/// has the same weights and differs only in the alpha scalars.
enum class Variant { full, vanilla_baseline, swap, pdc_only, cpdc_only };

std::string to_string(Variant v);
std::optional<Variant> parse_variant(const std::string& name);
const std::vector<std::string>& variant_names();

struct NetConfig {
  int num_classes = 5;
  std::array<int, 3> channels{16, 32, 64};
  int blocks = 2;
  int decoder_low = 16;
  int decoder_high = 32;
  Variant variant = Variant::full;
  /// Applies to the PDC-bearing context modules of the variant.
  AlphaMode alpha_mode = AlphaMode::learnable;
  double alpha_fixed = 0.5;

  void validate() const;
};

/// One or two chained PDC kernels (5x5, then 7x7 dilation 3 when cascaded).
template <typename T>
struct ContextModule {
  std::vector<PdcKernel<T>> kernels;

  static ContextModule make(std::int64_t channels, bool cascade, bool pdc, const NetConfig& cfg, Rng& rng);
  Var<T> operator()(const Var<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
struct ResBlock {
  Conv<T> conv1;
  Norm<T> norm1;
  Conv<T> conv2;
  Norm<T> norm2;

  Var<T> operator()(const Var<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
struct Stage {
  Conv<T> transition;  // 3x3 stride 2
  Norm<T> transition_norm;
  std::vector<ResBlock<T>> blocks;

  Var<T> operator()(const Var<T>& x) const;
  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
struct Branch {
  Conv<T> stem;
  Norm<T> stem_norm;
  std::array<Stage<T>, 3> stages;
  std::array<ContextModule<T>, 3> context;

  void collect(ParamList<T>& out, const std::string& prefix);
};

template <typename T>
class ToyPdcNet {
 public:
  /// Deterministic in (cfg, seed).
  ToyPdcNet(const NetConfig& cfg, std::uint64_t seed);

  /// rgb (N, 3, H, W), depth (N, 1, H, W) -> logits (N, M, H, W).
  Var<T> forward(const Var<T>& rgb, const Var<T>& depth) const;
  Tensor<T> forward(const Tensor<T>& rgb, const Tensor<T>& depth) const;

  /// Every trainable tensor with a stable dotted name.
  ParamList<T> parameters();
  std::int64_t parameter_count();

  const NetConfig& config() const { return cfg_; }
  Pointwise<T>& classifier() { return classifier_; }
  EcfLayer<T>& ecf(int stage) { return ecf_[static_cast<std::size_t>(stage)]; }
  Branch<T>& rgb_branch() { return rgb_; }
  Branch<T>& depth_branch() { return depth_; }

  /// Checkpoint entries, stored as f32.
  std::vector<CheckpointEntry> state();
  /// Throws FormatError on unknown, missing or mis-shaped tensors.
  void load_state(const std::vector<CheckpointEntry>& entries);

 private:
  NetConfig cfg_;
  Branch<T> rgb_;
  Branch<T> depth_;
  std::array<EcfLayer<T>, 3> ecf_;
  Pointwise<T> proj_low_;
  Pointwise<T> proj_high_;
  Pointwise<T> classifier_;
};

/// Per-pixel argmax over channels; ties go to the lower class.
template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& logits);

}  // namespace pdconv
