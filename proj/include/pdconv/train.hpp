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

// SGD with momentum and weight decay, poly learning-rate schedule, training
// and evaluation loops, and the JSON run configuration.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdconv/metrics.hpp"
#include "pdconv/network.hpp"
#include "pdconv/scene.hpp"

namespace pdconv {

/// Loss became non-finite; carries the zero-based iteration index.
class DivergenceError : public NumericError {
 public:
  DivergenceError(std::int64_t iteration, const std::string& what)
      : NumericError(what), iteration_(iteration) {}
  std::int64_t iteration() const { return iteration_; }

 private:
  std::int64_t iteration_;
};

/// lr0 * (1 - iter / max_iter)^power, clamped at 0 past max_iter.
double poly_lr(double lr0, std::int64_t iter, std::int64_t max_iter, double power = 0.9);

template <typename T>
class Sgd {
 public:
  Sgd(ParamList<T> params, double momentum, double weight_decay);

  /// v = momentum * v + (g + weight_decay * p);  p -= lr * v.
  void step(double lr);
  void zero_grad();
  const ParamList<T>& params() const { return params_; }

 private:
  ParamList<T> params_;
  double momentum_;
  double weight_decay_;
  std::vector<Tensor<T>> velocity_;
};

struct TrainConfig {
  double lr = 8e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int epochs = 10;
  int batch = 8;
  double val_fraction = 0.2;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  std::int64_t iter = 0;
  double lr = 0.0;
  double loss = 0.0;
  double pix_acc = 0.0;  // validation metrics, NaN without a validation set
  double miou = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// One forward / backward / update on a batch; returns the loss before the
/// update. Throws DivergenceError if the loss is not finite.
template <typename T>
double train_step(ToyPdcNet<T>& net, Sgd<T>& opt, const Batch& batch, double lr, std::int64_t iter);

/// Mean cross-entropy of a batch without building a graph.
template <typename T>
double batch_loss(const ToyPdcNet<T>& net, const Batch& batch);

/// Predictions for a batch.
template <typename T>
std::vector<std::int32_t> predict(const ToyPdcNet<T>& net, const Batch& batch);

/// Confusion matrix over a whole dataset, evaluated in chunks of batch_size.
template <typename T>
ConfusionMatrix evaluate(const ToyPdcNet<T>& net, const Dataset& data, int batch_size = 8);

/// Trains for cfg.epochs over train_set; after every epoch evaluates on val_set
/// (if non-empty) and calls on_epoch. Deterministic in cfg.seed.
template <typename T>
std::vector<EpochLog> train(ToyPdcNet<T>& net, const Dataset& train_set, const Dataset& val_set,
                            const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch = {});

/// Splits off the last round(fraction * count) samples as validation.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double val_fraction);

/// Full run configuration. Unknown keys and out-of-range values are rejected
/// with ConfigError.
struct RunConfig {
  std::uint64_t seed = 0;
  NetConfig model;
  GenConfig generator;
  TrainConfig train;
  bool model_classes_set = false;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
};

}  // namespace pdconv
