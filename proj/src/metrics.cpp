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

#include "pdconv/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pdconv/errors.hpp"

namespace pdconv {

ConfusionMatrix::ConfusionMatrix(int num_classes) : m_(num_classes) {
  if (num_classes < 1) throw ConfigError("number of classes must be positive");
  counts_.assign(static_cast<std::size_t>(m_) * static_cast<std::size_t>(m_), 0);
}

void ConfusionMatrix::add(std::span<const std::int32_t> preds, std::span<const std::int32_t> truth) {
  if (preds.size() != truth.size()) {
    throw DimensionError("prediction and truth sizes differ: " + std::to_string(preds.size()) + " vs " +
                         std::to_string(truth.size()));
  }
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto t = truth[i];
    const auto p = preds[i];
    if (t < 0 || t >= m_) throw DataError("truth label " + std::to_string(t) + " out of range at pixel " + std::to_string(i));
    if (p < 0 || p >= m_) throw DataError("predicted label " + std::to_string(p) + " out of range at pixel " + std::to_string(i));
    ++counts_[static_cast<std::size_t>(t * m_ + p)];
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.m_ != m_) throw DimensionError("confusion matrices have different class counts");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts_) s += c;
  return s;
}

std::int64_t ConfusionMatrix::truth_count(int cls) const {
  std::int64_t s = 0;
  for (int j = 0; j < m_; ++j) s += at(cls, j);
  return s;
}

std::int64_t ConfusionMatrix::pred_count(int cls) const {
  std::int64_t s = 0;
  for (int i = 0; i < m_; ++i) s += at(i, cls);
  return s;
}

double ConfusionMatrix::pixel_accuracy() const {
  const auto g = total();
  if (g == 0) return 0.0;
  std::int64_t diag = 0;
  for (int i = 0; i < m_; ++i) diag += at(i, i);
  return static_cast<double>(diag) / static_cast<double>(g);
}

std::vector<double> ConfusionMatrix::class_iou() const {
  std::vector<double> iou(static_cast<std::size_t>(m_));
  for (int i = 0; i < m_; ++i) {
    const auto uni = truth_count(i) + pred_count(i) - at(i, i);
    iou[static_cast<std::size_t>(i)] =
        uni == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(at(i, i)) / static_cast<double>(uni);
  }
  return iou;
}

double ConfusionMatrix::mean_iou() const {
  double sum = 0.0;
  int n = 0;
  for (double v : class_iou()) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? 0.0 : sum / n;
}

SegMetrics metrics(std::span<const std::int32_t> preds, std::span<const std::int32_t> truth, int num_classes,
                   ConfusionMatrix* cm_out) {
  ConfusionMatrix cm(num_classes);
  cm.add(preds, truth);
  SegMetrics m{cm.pixel_accuracy(), cm.mean_iou(), cm.class_iou()};
  if (cm_out) *cm_out = cm;
  return m;
}

}  // namespace pdconv
