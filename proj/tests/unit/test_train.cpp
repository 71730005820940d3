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

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "pdconv/train.hpp"
#include "test_util.hpp"

namespace pdconv {
namespace {

NetConfig tiny_net(int classes) {
  NetConfig cfg;
  cfg.num_classes = classes;
  cfg.channels = {4, 6, 8};
  cfg.blocks = 1;
  cfg.decoder_low = 4;
  cfg.decoder_high = 4;
  return cfg;
}

Dataset tiny_data(int count, std::uint64_t seed = 1) {
  GenConfig g;
  g.height = 16;
  g.width = 16;
  g.num_classes = 4;
  return generate_dataset(seed, count, g);
}

TEST(PolyLr, Schedule) {
  EXPECT_DOUBLE_EQ(poly_lr(8e-3, 0, 100), 8e-3);
  EXPECT_NEAR(poly_lr(8e-3, 50, 100), 8e-3 * std::pow(0.5, 0.9), 1e-18);
  EXPECT_NEAR(poly_lr(8e-3, 50, 100), 4.287e-3, 1e-6);
  EXPECT_EQ(poly_lr(8e-3, 100, 100), 0.0);
  EXPECT_EQ(poly_lr(8e-3, 150, 100), 0.0);
  EXPECT_DOUBLE_EQ(poly_lr(1.0, 25, 100, 1.0), 0.75);
}

TEST(Sgd, MatchesMomentumOracle) {
  Var<double> p = Var<double>::leaf(Tensor<double>(Shape{1, 1, 1, 2}, std::vector<double>{1.0, -2.0}));
  ParamList<double> params{{"p", &p}};
  Sgd<double> opt(params, 0.9, 0.1);
  double v[2] = {0, 0};
  double ref[2] = {1.0, -2.0};
  for (int step = 0; step < 5; ++step) {
    opt.zero_grad();
    // loss = sum(p^2) / 2 * 3, gradient 3p.
    Var<double> loss = ag::scale(ag::sum(ag::mul(p, p)), 1.5);
    backward(loss);
    opt.step(0.05);
    for (int k = 0; k < 2; ++k) {
      v[k] = 0.9 * v[k] + (3.0 * ref[k] + 0.1 * ref[k]);
      ref[k] -= 0.05 * v[k];
    }
    for (int k = 0; k < 2; ++k) EXPECT_NEAR(p.value()[k], ref[k], 1e-15) << step;
  }
}

TEST(Sgd, SkipsParamsWithoutGradient) {
  Var<double> used = Var<double>::leaf(Tensor<double>::scalar(1.0));
  Var<double> unused = Var<double>::leaf(Tensor<double>::scalar(4.0));
  Sgd<double> opt({{"used", &used}, {"unused", &unused}}, 0.9, 0.5);
  backward(ag::mul(used, used));
  opt.step(0.1);
  EXPECT_EQ(unused.value()[0], 4.0);
  EXPECT_NE(used.value()[0], 1.0);
}

TEST(Train, LossTraceIsDeterministicAndDecreases) {
  const Dataset data = tiny_data(8);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch = 4;
  cfg.lr = 0.02;
  cfg.seed = 3;
  ToyPdcNet<float> a(tiny_net(4), 5);
  ToyPdcNet<float> b(tiny_net(4), 5);
  const auto la = train(a, data, Dataset{}, cfg);
  const auto lb = train(b, data, Dataset{}, cfg);
  ASSERT_EQ(la.size(), 10u);
  for (std::size_t i = 0; i < la.size(); ++i) {
    EXPECT_EQ(la[i].loss, lb[i].loss) << i;
    EXPECT_EQ(la[i].iter, static_cast<std::int64_t>(2 * (i + 1)));
    EXPECT_TRUE(std::isnan(la[i].pix_acc));
  }
  EXPECT_EQ(encode_checkpoint(a.state()), encode_checkpoint(b.state()));
  EXPECT_LT(la.back().loss, la.front().loss);
}

TEST(Train, ReportsValidationMetrics) {
  const Dataset data = tiny_data(6);
  auto [tr, val] = split_dataset(data, 0.34);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch = 2;
  ToyPdcNet<float> net(tiny_net(4), 1);
  int calls = 0;
  const auto logs = train(net, tr, val, cfg, [&](const EpochLog&) { ++calls; });
  EXPECT_EQ(calls, 2);
  for (const auto& log : logs) {
    EXPECT_GE(log.pix_acc, 0.0);
    EXPECT_LE(log.pix_acc, 1.0);
    EXPECT_GE(log.miou, 0.0);
  }
  const auto j = logs.front().to_json();
  EXPECT_TRUE(j.at("pix_acc").is_number());
  EpochLog no_val;
  no_val.pix_acc = std::nan("");
  no_val.miou = std::nan("");
  EXPECT_TRUE(no_val.to_json().at("miou").is_null());
}

TEST(Train, NonFiniteInputDiverges) {
  Dataset data = tiny_data(4);
  data.samples[2].rgb[10] = std::numeric_limits<float>::quiet_NaN();
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch = 1;
  cfg.seed = 0;
  ToyPdcNet<float> net(tiny_net(4), 1);
  try {
    train(net, data, Dataset{}, cfg);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 0);
    EXPECT_LT(e.iteration(), 4);
    EXPECT_NE(std::string(e.what()).find("iteration " + std::to_string(e.iteration())), std::string::npos);
  }
}

TEST(Train, RejectsClassMismatchAndEmptySet) {
  ToyPdcNet<float> net(tiny_net(5), 1);
  TrainConfig cfg;
  cfg.epochs = 1;
  EXPECT_THROW(train(net, tiny_data(2), Dataset{}, cfg), ConfigError);
  Dataset empty;
  empty.num_classes = 5;
  EXPECT_THROW(train(net, empty, Dataset{}, cfg), DataError);
}

TEST(Evaluate, PerfectNetworkScoresOne) {
  ToyPdcNet<float> net(tiny_net(4), 1);
  // Zero classifier: every pixel ties, argmax gives class 0.
  net.classifier().weight.mutable_value().fill(0.0f);
  net.classifier().bias.mutable_value().fill(0.0f);
  const Dataset data = tiny_data(3);
  const ConfusionMatrix cm = evaluate(net, data, 2);
  EXPECT_EQ(cm.total(), 3 * 256);
  EXPECT_EQ(cm.pred_count(0), 3 * 256);
  std::int64_t wall = 0;
  for (const auto& s : data.samples) wall += std::count(s.labels.begin(), s.labels.end(), 0);
  EXPECT_DOUBLE_EQ(cm.pixel_accuracy(), static_cast<double>(wall) / (3 * 256));
}

TEST(Split, TakesTrailingFraction) {
  const Dataset data = tiny_data(10);
  auto [tr, val] = split_dataset(data, 0.2);
  ASSERT_EQ(tr.samples.size(), 8u);
  ASSERT_EQ(val.samples.size(), 2u);
  EXPECT_EQ(val.samples[0].labels, data.samples[8].labels);
  EXPECT_EQ(val.num_classes, 4);
  auto [all, none] = split_dataset(data, 0.0);
  EXPECT_EQ(all.samples.size(), 10u);
  EXPECT_TRUE(none.samples.empty());
  EXPECT_THROW((void)split_dataset(data, 1.0), ConfigError);
}

TEST(RunConfig, ParsesAndRoundTrips) {
  const auto j = nlohmann::json::parse(R"({
    "seed": 9,
    "model": {"channels": [8, 8, 8], "variant": "swap", "alpha_mode": "fixed", "alpha_fixed": 0.25},
    "generator": {"height": 32, "num_classes": 4},
    "train": {"lr": 0.01, "epochs": 3}
  })");
  const RunConfig rc = RunConfig::from_json(j);
  EXPECT_EQ(rc.seed, 9u);
  EXPECT_EQ(rc.model.variant, Variant::swap);
  EXPECT_EQ(rc.model.alpha_mode, AlphaMode::fixed);
  EXPECT_EQ(rc.generator.height, 32);
  EXPECT_EQ(rc.train.epochs, 3);
  EXPECT_FALSE(rc.model_classes_set);
  const RunConfig again = RunConfig::from_json(nlohmann::json::parse(rc.to_json().dump()));
  EXPECT_EQ(again.to_json().dump(), rc.to_json().dump());
}

TEST(RunConfig, RejectsBadInput) {
  auto parse = [](const char* text) { return RunConfig::from_json(nlohmann::json::parse(text)); };
  EXPECT_THROW(parse(R"({"sede": 1})"), ConfigError);
  EXPECT_THROW(parse(R"({"train": {"learning_rate": 1}})"), ConfigError);
  EXPECT_THROW(parse(R"({"train": {"lr": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"train": {"lr": "fast"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"train": {"batch": 0}})"), ConfigError);
  EXPECT_THROW(parse(R"({"model": {"variant": "other"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"model": {"alpha_mode": "sometimes"}})"), ConfigError);
  EXPECT_THROW(parse(R"({"model": {"alpha_fixed": 2}})"), ConfigError);
  EXPECT_THROW(parse(R"({"generator": {"num_classes": 12}})"), ConfigError);
  EXPECT_THROW(parse(R"({"seed": -1})"), ConfigError);
  EXPECT_THROW(parse(R"([1, 2])"), ConfigError);
  TempDir dir;
  write_text_atomic(dir.path() / "bad.json", "{ nope");
  EXPECT_THROW((void)RunConfig::load(dir.path() / "bad.json"), ConfigError);
  EXPECT_THROW((void)RunConfig::load(dir.path() / "missing.json"), IoError);
}

TEST(RunConfig, ShippedDefaultLoads) {
  const RunConfig rc = RunConfig::load(PDCONV_SOURCE_DIR "/configs/default.json");
  EXPECT_EQ(rc.model.variant, Variant::full);
  EXPECT_EQ(rc.generator.height, 48);
  EXPECT_EQ(rc.generator.num_classes, 5);
}

}  // namespace
}  // namespace pdconv
