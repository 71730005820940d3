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

// Synthetic RGB-D indoor scenes with a depth-only-discriminable class pair.
//
// Classes: 0 wall, 1 bed, 2 pillow, 3 poster, 4.. generic objects.
//   - pillow has exactly the bed's color and sits closer than the bed by at
//     least kPillowGap in depth (the depth-only pair);
//   - poster lies in the wall plane with a different color (the color-only
//     pair). With M = 3 the bed takes the wall plane instead.
// Depth is built in [0.1, 0.9], noised, then min-max normalized per image.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pdconv/tensor.hpp"

namespace pdconv {

struct GenConfig {
  int height = 48;
  int width = 48;
  int num_classes = 5;
  int min_objects = 1;  // generic objects per scene, classes >= 4
  int max_objects = 3;
  double rgb_noise = 0.02;
  double depth_noise = 0.02;

  /// Throws ConfigError on an infeasible configuration.
  void validate() const;
};

inline constexpr int kMaxClasses = 10;
inline constexpr double kPillowGap = 0.25;

struct SegSample {
  Tensor<float> rgb;                  // (1, 3, H, W), values in [0, 1]
  Tensor<float> depth;                // (1, 1, H, W), values in [0, 1]
  std::vector<std::int32_t> labels;   // H * W, values in [0, M)

  int height() const { return static_cast<int>(rgb.h()); }
  int width() const { return static_cast<int>(rgb.w()); }
  /// Throws DimensionError / DataError if the invariants do not hold.
  void validate(int num_classes) const;
};

/// Deterministic in (seed, cfg).
SegSample gen_scene(std::uint64_t seed, const GenConfig& cfg);

/// Base color of a class before per-scene jitter. Pillow shares the bed's.
std::array<double, 3> class_color(int cls);

struct Dataset {
  int num_classes = 0;
  int height = 0;
  int width = 0;
  std::uint64_t seed = 0;
  std::vector<SegSample> samples;
};

/// Seeds are derived from (seed, index) so any prefix of a set is stable.
Dataset generate_dataset(std::uint64_t seed, int count, const GenConfig& cfg);

/// manifest.json plus scene_%05d.{rgb,depth,label}.pdt, each written atomically.
void write_dataset(const std::filesystem::path& dir, const Dataset& data);
/// Throws IoError for missing files and FormatError / DataError for bad ones.
Dataset read_dataset(const std::filesystem::path& dir);

/// Stacks samples [first, first + count) of the index list into a batch.
struct Batch {
  Tensor<float> rgb;
  Tensor<float> depth;
  std::vector<std::int32_t> labels;
};
Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices);

}  // namespace pdconv
