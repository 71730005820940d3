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

// Segmentation metrics from a confusion matrix.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pdconv {

/// counts[i * M + j] = pixels of true class i predicted as class j.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int num_classes);

  /// Throws DataError naming the pixel index on an out-of-range label and
  /// DimensionError on a size mismatch.
  void add(std::span<const std::int32_t> preds, std::span<const std::int32_t> truth);
  void merge(const ConfusionMatrix& other);

  int num_classes() const { return m_; }
  std::int64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth * m_ + pred)]; }
  std::int64_t total() const;
  /// g_i: pixels whose true class is i.
  std::int64_t truth_count(int cls) const;
  /// Pixels predicted as class j.
  std::int64_t pred_count(int cls) const;

  double pixel_accuracy() const;
  /// IoU per class; NaN for a class absent from both predictions and truth.
  std::vector<double> class_iou() const;
  /// Mean over classes with a defined IoU.
  double mean_iou() const;

 private:
  int m_;
  std::vector<std::int64_t> counts_;
};

struct SegMetrics {
  double pixel_acc = 0.0;
  double miou = 0.0;
  std::vector<double> class_iou;
};

SegMetrics metrics(std::span<const std::int32_t> preds, std::span<const std::int32_t> truth, int num_classes,
                   ConfusionMatrix* cm_out = nullptr);

}  // namespace pdconv
