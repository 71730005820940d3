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

#include "oracles.hpp"
#include "pdconv/pdc.hpp"

namespace pdconv {
namespace {

template <typename T>
PdcKernel<T> fixed_kernel(std::int64_t c, int k, int d, double alpha, std::uint64_t seed) {
  Rng rng(seed);
  return PdcKernel<T>::fixed(c, k, d, alpha, rng);
}

template <typename T>
Tensor<T> run(const Tensor<T>& x, const PdcKernel<T>& k) {
  return eval_no_grad<T>([&] { return pdc_forward(Var<T>::constant(x), k); });
}

template <typename T>
Tensor<T> rand_input(Shape s, std::uint64_t seed) {
  Rng rng(seed);
  return random_uniform<T>(s, rng);
}

TEST(Pdc, AlphaZeroEqualsConv2d) {
  for (auto [k, d] : {std::pair{5, 1}, std::pair{7, 3}}) {
    for (int c : {1, 2, 8}) {
      const auto kern = fixed_kernel<float>(c, k, d, 0.0, 1);
      const auto x = rand_input<float>(Shape{2, c, 13, 11}, 2);
      const auto y = run(x, kern);
      const auto ref = conv2d(x, ConvWeights<float>{kern.weight.value(), std::nullopt}, kern.spec);
      EXPECT_LE(max_abs(elementwise(ElementwiseOp::sub, y, ref)), 1e-7) << "k=" << k << " c=" << c;
    }
  }
}

TEST(Pdc, AlphaOneAnnihilatesConstantInterior) {
  for (auto [k, d] : {std::pair{5, 1}, std::pair{7, 3}}) {
    const auto kern = fixed_kernel<float>(3, k, d, 1.0, 3);
    const Tensor<float> x(Shape{1, 3, 24, 24}, 0.7f);
    const auto y = run(x, kern);
    const int r = kern.spec.pad_h();
    float interior = 0.0f;
    float boundary = 0.0f;
    for (std::int64_t c = 0; c < 3; ++c) {
      for (std::int64_t h = 0; h < 24; ++h) {
        for (std::int64_t w = 0; w < 24; ++w) {
          const bool inside = h >= r && h < 24 - r && w >= r && w < 24 - r;
          (inside ? interior : boundary) = std::max(inside ? interior : boundary, std::fabs(y(0, c, h, w)));
        }
      }
    }
    EXPECT_LE(interior, 1e-6f);
    EXPECT_GT(boundary, 1e-3f);  // zero padding breaks the cancellation at the border
  }
}

TEST(Pdc, ModesAgreeWithEachOtherAndTheOracle) {
  const auto x64 = rand_input<double>(Shape{1, 2, 8, 8}, 4);
  auto k64 = fixed_kernel<double>(2, 5, 1, 0.5, 5);
  const auto rewritten = run(x64, k64);
  k64.mode = PdcMode::definitional;
  const auto definitional = run(x64, k64);
  const auto oracle = oracle::pdc<double>(x64, k64.weight.value(), 0.5, 1);
  EXPECT_LE(max_scaled_diff(rewritten, definitional), 1e-12);
  EXPECT_LE(max_scaled_diff(definitional, oracle), 1e-12);

  const auto x32 = cast<float>(x64);
  auto k32 = fixed_kernel<float>(2, 5, 1, 0.5, 5);
  const auto r32 = run(x32, k32);
  k32.mode = PdcMode::definitional;
  EXPECT_LE(max_scaled_diff(r32, run(x32, k32)), 1e-6);
}

TEST(Pdc, OracleMatchesAcrossKernelsAndChannels) {
  int i = 0;
  for (auto [k, d] : {std::pair{5, 1}, std::pair{7, 3}, std::pair{3, 2}}) {
    for (int c : {1, 2, 8}) {
      for (double alpha : {0.0, 0.13, 0.5, 0.87, 1.0}) {
        const auto x = rand_input<double>(Shape{2, c, 10, 9}, static_cast<std::uint64_t>(100 + i++));
        const auto kern = fixed_kernel<double>(c, k, d, alpha, static_cast<std::uint64_t>(i));
        ASSERT_LE(max_scaled_diff(run(x, kern), oracle::pdc<double>(x, kern.weight.value(), alpha, d)), 1e-13);
      }
    }
  }
}

TEST(Pdc, AffineInAlpha) {
  const auto x = rand_input<float>(Shape{1, 4, 12, 12}, 6);
  Rng rng(7);
  auto kern = PdcKernel<float>::fixed(4, 7, 3, 0.0, rng);
  const auto y0 = run(x, kern);
  kern.alpha_fixed = 1.0;
  const auto y1 = run(x, kern);
  for (double a : {0.1, 0.37, 0.5, 0.9}) {
    kern.alpha_fixed = a;
    const auto ya = run(x, kern);
    Tensor<float> blend(ya.shape());
    for (std::int64_t i = 0; i < blend.size(); ++i) {
      blend[i] = static_cast<float>((1.0 - a) * y0[i] + a * y1[i]);
    }
    EXPECT_LE(max_abs(elementwise(ElementwiseOp::sub, ya, blend)), 1e-6);
  }
}

TEST(Pdc, SpikeResponseIsLinearInMagnitude) {
  const auto kern = fixed_kernel<double>(1, 5, 1, 1.0, 8);
  std::vector<double> peaks;
  for (double s : {1.0, 2.0, 4.0}) {
    Tensor<double> x(Shape{1, 1, 15, 15}, 0.5);
    x(0, 0, 7, 7) += s;
    const auto y = run(x, kern);
    double peak = 0.0;
    for (std::int64_t h = 2; h < 13; ++h)
      for (std::int64_t w = 2; w < 13; ++w) peak = std::max(peak, std::fabs(y(0, 0, h, w)));
    peaks.push_back(peak);
  }
  EXPECT_GT(peaks[0], 0.0);
  EXPECT_NEAR(peaks[1] / peaks[0], 2.0, 1e-12);
  EXPECT_NEAR(peaks[2] / peaks[0], 4.0, 1e-12);
}

TEST(Pdc, AlphaParameterization) {
  Rng rng(9);
  auto k = PdcKernel<double>::make(2, 5, 1, rng);
  EXPECT_EQ(alpha_value(k), 0.5);
  k.alpha.mutable_value()[0] = 20.0;
  EXPECT_NEAR(alpha_value(k), 1.0, 1e-8);
  k.alpha.mutable_value()[0] = -20.0;
  EXPECT_NEAR(alpha_value(k), 0.0, 1e-8);
  k.alpha_mode = AlphaMode::fixed;
  k.alpha_fixed = 0.8;
  EXPECT_EQ(alpha_value(k), 0.8);
  ParamList<double> params;
  k.collect(params, "k");
  ASSERT_EQ(params.size(), 1u);  // fixed alpha is not trainable
  k.alpha_mode = AlphaMode::learnable;
  params.clear();
  k.collect(params, "k");
  ASSERT_EQ(params.size(), 2u);
  EXPECT_EQ(params[1].name, "k.alpha");
}

TEST(Pdc, ChannelMismatchIsDimensionError) {
  const auto k = fixed_kernel<float>(3, 5, 1, 0.5, 10);
  EXPECT_THROW((void)run(Tensor<float>(Shape{1, 2, 8, 8}), k), DimensionError);
}

TEST(PdcGated, ZeroGateGivesZero) {
  Rng rng(11);
  auto layer = PdcLayer<float>::make(3, rng);
  layer.gate = Pointwise<float>::zeros(3, 3);
  const auto x = rand_input<float>(Shape{1, 3, 9, 9}, 12);
  EXPECT_EQ(max_abs(pdc_gated(x, layer)), 0.0);
}

TEST(PdcGated, IdentitiesGiveSquare) {
  Rng rng(13);
  auto layer = PdcLayer<double>::make(2, rng);
  layer.gate = Pointwise<double>::identity(2);
  layer.kernel.alpha_mode = AlphaMode::fixed;
  layer.kernel.alpha_fixed = 0.0;
  Tensor<double> w(Shape{2, 1, 5, 5});
  w(0, 0, 2, 2) = w(1, 0, 2, 2) = 1.0;
  layer.kernel.weight = Var<double>::leaf(w);
  const auto x = rand_input<double>(Shape{1, 2, 7, 7}, 14);
  const auto y = pdc_gated(x, layer);
  for (std::int64_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i] * x[i]);
}

TEST(PdcGated, MatchesStraightLineComposition) {
  Rng rng(15);
  auto layer = PdcLayer<float>::make(4, rng);
  layer.kernel.alpha.mutable_value()[0] = 0.4f;
  layer.gate.bias = Var<float>::leaf(random_uniform<float>(Shape{1, 4, 1, 1}, rng));
  const auto x = rand_input<float>(Shape{2, 4, 10, 10}, 16);
  const auto pre = eval_no_grad<float>([&] { return pdc_forward(Var<float>::constant(x), layer.kernel); });
  const auto gate = pointwise_conv(pre, ConvWeights<float>{layer.gate.weight.value(), layer.gate.bias.value()});
  const auto want = elementwise(ElementwiseOp::mul, gate, x);
  const auto got = pdc_gated(x, layer);
  for (std::int64_t i = 0; i < got.size(); ++i) ASSERT_EQ(got[i], want[i]);
}

TEST(PdcEquivalence, TwoHundredInstances) {
  const EquivalenceResult r = pdc_equivalence(200, 0);
  EXPECT_EQ(r.instances, 200);
  EXPECT_LE(r.max_dev_f32, EquivalenceResult::kTolF32);
  EXPECT_LE(r.max_dev_f64, EquivalenceResult::kTolF64);
  EXPECT_TRUE(r.passed());
}

}  // namespace
}  // namespace pdconv
