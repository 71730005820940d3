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

#include "pdconv/train.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "pdconv/io.hpp"
#include "pdconv/random.hpp"

namespace pdconv {

double poly_lr(double lr0, std::int64_t iter, std::int64_t max_iter, double power) {
  if (max_iter <= 0) return lr0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return frac <= 0.0 ? 0.0 : lr0 * std::pow(frac, power);
}

template <typename T>
Sgd<T>::Sgd(ParamList<T> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(p.var->value().shape());
}

template <typename T>
void Sgd<T>::step(double lr) {
  const T mu = static_cast<T>(momentum_);
  const T wd = static_cast<T>(weight_decay_);
  const T step = static_cast<T>(lr);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var<T>& var = *params_[i].var;
    if (!var.has_grad()) continue;
    const Tensor<T> g = var.grad();
    auto p = var.mutable_value().data();
    auto v = velocity_[i].data();
    const auto gd = g.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      v[k] = mu * v[k] + (gd[k] + wd * p[k]);
      p[k] -= step * v[k];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& p : params_) p.var->zero_grad();
}

void TrainConfig::validate() const {
  if (!(lr > 0.0 && lr <= 10.0)) throw ConfigError("train.lr must be in (0, 10]");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0 && weight_decay <= 1.0)) throw ConfigError("train.weight_decay must be in [0, 1]");
  if (!(poly_power >= 0.0 && poly_power <= 10.0)) throw ConfigError("train.poly_power must be in [0, 10]");
  if (epochs < 1 || epochs > 100000) throw ConfigError("train.epochs must be in [1, 100000]");
  if (batch < 1 || batch > 4096) throw ConfigError("train.batch must be in [1, 4096]");
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("train.val_fraction must be in [0, 1)");
}

nlohmann::ordered_json EpochLog::to_json() const {
  auto metric = [](double v) { return std::isnan(v) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(v); };
  return {{"epoch", epoch}, {"iter", iter},           {"lr", lr},
          {"loss", loss},   {"pix_acc", metric(pix_acc)}, {"miou", metric(miou)}};
}

namespace {

template <typename T>
Var<T> batch_input(const Tensor<float>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return Var<T>::constant(t);
  } else {
    return Var<T>::constant(cast<T>(t));
  }
}

}  // namespace

template <typename T>
double train_step(ToyPdcNet<T>& net, Sgd<T>& opt, const Batch& batch, double lr, std::int64_t iter) {
  opt.zero_grad();
  Var<T> logits = net.forward(batch_input<T>(batch.rgb), batch_input<T>(batch.depth));
  Var<T> loss = ag::cross_entropy(logits, std::span<const std::int32_t>(batch.labels));
  const double value = static_cast<double>(loss.value()[0]);
  if (!std::isfinite(value)) {
    throw DivergenceError(iter, "loss is not finite at iteration " + std::to_string(iter));
  }
  backward(loss);
  opt.step(lr);
  return value;
}

template <typename T>
double batch_loss(const ToyPdcNet<T>& net, const Batch& batch) {
  NoGradGuard guard;
  Var<T> logits = net.forward(batch_input<T>(batch.rgb), batch_input<T>(batch.depth));
  return static_cast<double>(ag::cross_entropy(logits, std::span<const std::int32_t>(batch.labels)).value()[0]);
}

template <typename T>
std::vector<std::int32_t> predict(const ToyPdcNet<T>& net, const Batch& batch) {
  NoGradGuard guard;
  return argmax_channels(net.forward(batch_input<T>(batch.rgb), batch_input<T>(batch.depth)).value());
}

template <typename T>
ConfusionMatrix evaluate(const ToyPdcNet<T>& net, const Dataset& data, int batch_size) {
  ConfusionMatrix cm(net.config().num_classes);
  const std::size_t n = data.samples.size();
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + static_cast<std::size_t>(batch_size)); ++i) idx.push_back(i);
    const Batch b = make_batch(data, idx);
    cm.add(predict(net, b), b.labels);
  }
  return cm;
}

template <typename T>
std::vector<EpochLog> train(ToyPdcNet<T>& net, const Dataset& train_set, const Dataset& val_set,
                            const TrainConfig& cfg, const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  if (train_set.samples.empty()) throw DataError("training set is empty");
  if (train_set.num_classes != net.config().num_classes) {
    throw ConfigError("dataset has " + std::to_string(train_set.num_classes) + " classes, model expects " +
                      std::to_string(net.config().num_classes));
  }
  Sgd<T> opt(net.parameters(), cfg.momentum, cfg.weight_decay);
  const std::size_t n = train_set.samples.size();
  const auto bs = static_cast<std::size_t>(cfg.batch);
  const std::int64_t per_epoch = static_cast<std::int64_t>((n + bs - 1) / bs);
  const std::int64_t max_iter = per_epoch * cfg.epochs;
  std::vector<std::size_t> order(n);
  std::vector<EpochLog> logs;
  std::int64_t iter = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)))]);
    }
    double loss_sum = 0.0;
    double lr = cfg.lr;
    for (std::size_t start = 0; start < n; start += bs) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + bs)));
      lr = poly_lr(cfg.lr, iter, max_iter, cfg.poly_power);
      loss_sum += train_step(net, opt, make_batch(train_set, idx), lr, iter);
      ++iter;
    }
    EpochLog log{epoch, iter, lr, loss_sum / static_cast<double>(per_epoch), std::nan(""), std::nan("")};
    if (!val_set.samples.empty()) {
      const ConfusionMatrix cm = evaluate(net, val_set, cfg.batch);
      log.pix_acc = cm.pixel_accuracy();
      log.miou = cm.mean_iou();
    }
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return logs;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double val_fraction) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("val_fraction must be in [0, 1)");
  const std::size_t n = data.samples.size();
  auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n)));
  if (n_val >= n) n_val = n - 1;
  Dataset tr{data.num_classes, data.height, data.width, data.seed, {}};
  Dataset va = tr;
  tr.samples.assign(data.samples.begin(), data.samples.end() - static_cast<std::ptrdiff_t>(n_val));
  va.samples.assign(data.samples.end() - static_cast<std::ptrdiff_t>(n_val), data.samples.end());
  return {std::move(tr), std::move(va)};
}

namespace {

void reject_unknown(const nlohmann::json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

template <typename V>
void read_key(const nlohmann::json& obj, const char* key, V& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<V>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(where + "." + key + " has the wrong type");
  }
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
  RunConfig rc;
  reject_unknown(j, {"seed", "model", "generator", "train"}, "config");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw ConfigError("config.seed must be a non-negative integer");
    rc.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    reject_unknown(m, {"num_classes", "channels", "blocks", "decoder_low", "decoder_high", "variant", "alpha_mode",
                       "alpha_fixed"},
                   "model");
    if (m.contains("num_classes")) rc.model_classes_set = true;
    read_key(m, "num_classes", rc.model.num_classes, "model");
    read_key(m, "channels", rc.model.channels, "model");
    read_key(m, "blocks", rc.model.blocks, "model");
    read_key(m, "decoder_low", rc.model.decoder_low, "model");
    read_key(m, "decoder_high", rc.model.decoder_high, "model");
    std::string variant = to_string(rc.model.variant);
    read_key(m, "variant", variant, "model");
    const auto v = parse_variant(variant);
    if (!v) throw ConfigError("unknown model.variant '" + variant + "'");
    rc.model.variant = *v;
    std::string mode = "learnable";
    read_key(m, "alpha_mode", mode, "model");
    if (mode == "learnable") {
      rc.model.alpha_mode = AlphaMode::learnable;
    } else if (mode == "fixed") {
      rc.model.alpha_mode = AlphaMode::fixed;
    } else {
      throw ConfigError("model.alpha_mode must be 'learnable' or 'fixed'");
    }
    read_key(m, "alpha_fixed", rc.model.alpha_fixed, "model");
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    reject_unknown(g, {"height", "width", "num_classes", "min_objects", "max_objects", "rgb_noise", "depth_noise"},
                   "generator");
    read_key(g, "height", rc.generator.height, "generator");
    read_key(g, "width", rc.generator.width, "generator");
    read_key(g, "num_classes", rc.generator.num_classes, "generator");
    read_key(g, "min_objects", rc.generator.min_objects, "generator");
    read_key(g, "max_objects", rc.generator.max_objects, "generator");
    read_key(g, "rgb_noise", rc.generator.rgb_noise, "generator");
    read_key(g, "depth_noise", rc.generator.depth_noise, "generator");
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown(t, {"lr", "momentum", "weight_decay", "poly_power", "epochs", "batch", "val_fraction"}, "train");
    read_key(t, "lr", rc.train.lr, "train");
    read_key(t, "momentum", rc.train.momentum, "train");
    read_key(t, "weight_decay", rc.train.weight_decay, "train");
    read_key(t, "poly_power", rc.train.poly_power, "train");
    read_key(t, "epochs", rc.train.epochs, "train");
    read_key(t, "batch", rc.train.batch, "train");
    read_key(t, "val_fraction", rc.train.val_fraction, "train");
  }
  rc.train.seed = rc.seed;
  rc.model.validate();
  rc.generator.validate();
  rc.train.validate();
  return rc;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
  return {{"seed", seed},
          {"model",
           {{"num_classes", model.num_classes},
            {"channels", model.channels},
            {"blocks", model.blocks},
            {"decoder_low", model.decoder_low},
            {"decoder_high", model.decoder_high},
            {"variant", to_string(model.variant)},
            {"alpha_mode", model.alpha_mode == AlphaMode::learnable ? "learnable" : "fixed"},
            {"alpha_fixed", model.alpha_fixed}}},
          {"generator",
           {{"height", generator.height},
            {"width", generator.width},
            {"num_classes", generator.num_classes},
            {"min_objects", generator.min_objects},
            {"max_objects", generator.max_objects},
            {"rgb_noise", generator.rgb_noise},
            {"depth_noise", generator.depth_noise}}},
          {"train",
           {{"lr", train.lr},
            {"momentum", train.momentum},
            {"weight_decay", train.weight_decay},
            {"poly_power", train.poly_power},
            {"epochs", train.epochs},
            {"batch", train.batch},
            {"val_fraction", train.val_fraction}}}};
}

template class Sgd<float>;
template class Sgd<double>;
template double train_step(ToyPdcNet<float>&, Sgd<float>&, const Batch&, double, std::int64_t);
template double train_step(ToyPdcNet<double>&, Sgd<double>&, const Batch&, double, std::int64_t);
template double batch_loss(const ToyPdcNet<float>&, const Batch&);
template double batch_loss(const ToyPdcNet<double>&, const Batch&);
template std::vector<std::int32_t> predict(const ToyPdcNet<float>&, const Batch&);
template std::vector<std::int32_t> predict(const ToyPdcNet<double>&, const Batch&);
template ConfusionMatrix evaluate(const ToyPdcNet<float>&, const Dataset&, int);
template ConfusionMatrix evaluate(const ToyPdcNet<double>&, const Dataset&, int);
template std::vector<EpochLog> train(ToyPdcNet<float>&, const Dataset&, const Dataset&, const TrainConfig&,
                                     const std::function<void(const EpochLog&)>&);
template std::vector<EpochLog> train(ToyPdcNet<double>&, const Dataset&, const Dataset&, const TrainConfig&,
                                     const std::function<void(const EpochLog&)>&);

}  // namespace pdconv
