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

#include <map>
#include <set>

#include "pdconv/network.hpp"
#include "pdconv/random.hpp"
#include "test_util.hpp"

namespace pdconv {
namespace {

NetConfig small_config(Variant v = Variant::full) {
  NetConfig cfg;
  cfg.num_classes = 4;
  cfg.channels = {4, 6, 8};
  cfg.blocks = 1;
  cfg.decoder_low = 4;
  cfg.decoder_high = 4;
  cfg.variant = v;
  return cfg;
}

struct Inputs {
  Tensor<double> rgb;
  Tensor<double> depth;
};

Inputs random_inputs(std::int64_t n, std::int64_t h, std::int64_t w, std::uint64_t seed) {
  Rng rng(seed);
  return {random_uniform<double>(Shape{n, 3, h, w}, rng, 0.0, 1.0),
          random_uniform<double>(Shape{n, 1, h, w}, rng, 0.0, 1.0)};
}

TEST(Network, LogitsShape) {
  const ToyPdcNet<double> net(small_config(), 1);
  for (auto [h, w] : {std::pair{16, 16}, std::pair{24, 32}, std::pair{17, 23}}) {
    const Inputs in = random_inputs(2, h, w, 2);
    EXPECT_EQ(net.forward(in.rgb, in.depth).shape(), (Shape{2, 4, h, w}));
  }
}

TEST(Network, DeterministicInSeed) {
  const Inputs in = random_inputs(1, 16, 16, 3);
  const ToyPdcNet<double> a(small_config(), 7);
  const ToyPdcNet<double> b(small_config(), 7);
  const ToyPdcNet<double> c(small_config(), 8);
  const auto ya = a.forward(in.rgb, in.depth);
  const auto yb = b.forward(in.rgb, in.depth);
  EXPECT_TRUE(std::equal(ya.data().begin(), ya.data().end(), yb.data().begin()));
  EXPECT_GT(max_abs_diff(ya, c.forward(in.rgb, in.depth)), 0.0);
}

TEST(Network, BatchItemsAreIndependent) {
  const ToyPdcNet<double> net(small_config(), 1);
  const Inputs pair = random_inputs(2, 16, 16, 4);
  const auto both = net.forward(pair.rgb, pair.depth);
  Tensor<double> rgb1(Shape{1, 3, 16, 16}), depth1(Shape{1, 1, 16, 16});
  std::copy_n(pair.rgb.data().begin() + 3 * 256, 3 * 256, rgb1.data().begin());
  std::copy_n(pair.depth.data().begin() + 256, 256, depth1.data().begin());
  const auto second = net.forward(rgb1, depth1);
  for (std::int64_t i = 0; i < second.size(); ++i) EXPECT_NEAR(second[i], both[4 * 256 + i], 1e-12);
}

TEST(Network, ZeroClassifierGivesZeroLogits) {
  ToyPdcNet<double> net(small_config(), 1);
  net.classifier().weight.mutable_value().fill(0.0);
  net.classifier().bias.mutable_value().fill(0.0);
  const Inputs in = random_inputs(1, 16, 16, 5);
  EXPECT_EQ(max_abs(net.forward(in.rgb, in.depth)), 0.0);
}

TEST(Network, ParameterNamesUniqueAndCovering) {
  ToyPdcNet<double> net(small_config(), 1);
  const auto params = net.parameters();
  std::set<std::string> names;
  std::int64_t total = 0;
  for (const auto& p : params) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    total += p.var->value().size();
  }
  EXPECT_EQ(total, net.parameter_count());
  for (const char* expected :
       {"rgb.stem.weight", "depth.stage2.block1.conv2.weight", "rgb.stage3.context.pdc7.alpha", "ecf1.eta",
        "ecf3.lambda", "ecf2.gate_depth.bias", "decoder.classifier.weight"}) {
    EXPECT_TRUE(names.count(expected)) << expected;
  }
}

TEST(Network, DefaultParameterCount) {
  NetConfig cfg;
  ToyPdcNet<float> net(cfg, 0);
  EXPECT_EQ(net.parameter_count(), 465316);
}

// Which context kernels are PDC (learnable alpha) and which are plain.
TEST(Network, VariantAlphaPlacement) {
  struct Expect {
    Variant v;
    std::size_t rgb_kernels;
    bool rgb_pdc;
    std::size_t depth_kernels;
    bool depth_pdc;
  };
  for (const Expect e : {Expect{Variant::full, 2, true, 1, true}, Expect{Variant::vanilla_baseline, 2, false, 1, false},
                         Expect{Variant::swap, 1, true, 2, true}, Expect{Variant::pdc_only, 2, false, 1, true},
                         Expect{Variant::cpdc_only, 2, true, 1, false}}) {
    ToyPdcNet<double> net(small_config(e.v), 1);
    for (int s = 0; s < 3; ++s) {
      const auto& rk = net.rgb_branch().context[s].kernels;
      const auto& dk = net.depth_branch().context[s].kernels;
      ASSERT_EQ(rk.size(), e.rgb_kernels) << to_string(e.v);
      ASSERT_EQ(dk.size(), e.depth_kernels) << to_string(e.v);
      for (const auto& k : rk) {
        EXPECT_EQ(k.alpha_mode == AlphaMode::learnable, e.rgb_pdc) << to_string(e.v);
        EXPECT_EQ(alpha_value(k), e.rgb_pdc ? 0.5 : 0.0);
      }
      for (const auto& k : dk) {
        EXPECT_EQ(k.alpha_mode == AlphaMode::learnable, e.depth_pdc) << to_string(e.v);
        EXPECT_EQ(alpha_value(k), e.depth_pdc ? 0.5 : 0.0);
      }
    }
  }
}

TEST(Network, VariantsShareWeightsAndDifferOnlyInAlphas) {
  ToyPdcNet<double> full(small_config(Variant::full), 3);
  ToyPdcNet<double> vanilla(small_config(Variant::vanilla_baseline), 3);
  std::map<std::string, const Tensor<double>*> by_name;
  for (const auto& p : vanilla.parameters()) by_name[p.name] = &p.var->value();
  int alphas = 0;
  for (const auto& p : full.parameters()) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      EXPECT_NE(p.name.find(".alpha"), std::string::npos) << p.name;
      ++alphas;
      continue;
    }
    EXPECT_EQ(max_abs_diff(p.var->value(), *it->second), 0.0) << p.name;
  }
  EXPECT_EQ(alphas, 9);
}

TEST(Network, FixedAlphaModeUsesConfiguredValue) {
  NetConfig cfg = small_config();
  cfg.alpha_mode = AlphaMode::fixed;
  cfg.alpha_fixed = 0.3;
  ToyPdcNet<double> net(cfg, 1);
  for (int s = 0; s < 3; ++s) {
    for (const auto& k : net.rgb_branch().context[s].kernels) EXPECT_DOUBLE_EQ(alpha_value(k), 0.3);
  }
  for (const auto& p : net.parameters()) EXPECT_EQ(p.name.find(".alpha"), std::string::npos) << p.name;
}

TEST(Network, StateRoundTrip) {
  ToyPdcNet<float> a(small_config(), 1);
  ToyPdcNet<float> b(small_config(), 2);
  b.load_state(a.state());
  EXPECT_EQ(encode_checkpoint(a.state()), encode_checkpoint(b.state()));
  Rng rng(1);
  const auto rgb = random_uniform<float>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
  const auto depth = random_uniform<float>(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
  EXPECT_EQ(max_abs_diff(a.forward(rgb, depth), b.forward(rgb, depth)), 0.0f);
}

TEST(Network, LoadStateRejectsMismatches) {
  ToyPdcNet<float> net(small_config(), 1);
  auto missing = net.state();
  missing.pop_back();
  EXPECT_THROW(net.load_state(missing), FormatError);
  auto unknown = net.state();
  unknown.push_back({"bogus", unknown.front().array});
  EXPECT_THROW(net.load_state(unknown), FormatError);
  auto duplicate = net.state();
  duplicate.push_back(duplicate.front());
  EXPECT_THROW(net.load_state(duplicate), FormatError);
  auto misshaped = net.state();
  misshaped.front().array = to_raw<float>(std::vector<float>(3, 0.0f), {1, 1, 1, 3});
  EXPECT_THROW(net.load_state(misshaped), FormatError);
  ToyPdcNet<float> wider([] {
    NetConfig c = small_config();
    c.channels = {4, 6, 10};
    return c;
  }(), 1);
  EXPECT_THROW(net.load_state(wider.state()), FormatError);
}

TEST(Network, InputValidation) {
  const ToyPdcNet<double> net(small_config(), 1);
  const Inputs in = random_inputs(1, 16, 16, 1);
  EXPECT_THROW((void)net.forward(in.depth, in.depth), DimensionError);
  EXPECT_THROW((void)net.forward(in.rgb, in.rgb), DimensionError);
  EXPECT_THROW((void)net.forward(in.rgb, random_inputs(1, 16, 12, 1).depth), DimensionError);
  EXPECT_THROW((void)net.forward(in.rgb, random_inputs(2, 16, 16, 1).depth), DimensionError);
  NetConfig bad = small_config();
  bad.num_classes = 1;
  EXPECT_THROW((ToyPdcNet<double>(bad, 0)), ConfigError);
  bad = small_config();
  bad.alpha_fixed = 1.5;
  EXPECT_THROW((ToyPdcNet<double>(bad, 0)), ConfigError);
}

TEST(Network, VariantNames) {
  for (const auto& name : variant_names()) {
    ASSERT_TRUE(parse_variant(name).has_value()) << name;
    EXPECT_EQ(to_string(*parse_variant(name)), name);
  }
  EXPECT_FALSE(parse_variant("vanilla").has_value());
}

TEST(Argmax, PicksLargestWithLowerIndexOnTies) {
  Tensor<double> logits(Shape{1, 3, 1, 3});
  // pixel 0: class 2 largest; pixel 1: tie 0/1; pixel 2: all equal.
  logits(0, 0, 0, 0) = 0.1;
  logits(0, 1, 0, 0) = 0.2;
  logits(0, 2, 0, 0) = 0.9;
  logits(0, 0, 0, 1) = 0.5;
  logits(0, 1, 0, 1) = 0.5;
  logits(0, 2, 0, 1) = -1.0;
  EXPECT_EQ(argmax_channels(logits), (std::vector<std::int32_t>{2, 0, 0}));
}

}  // namespace
}  // namespace pdconv
