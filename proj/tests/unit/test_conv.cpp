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
#include "pdconv/conv.hpp"
#include "pdconv/random.hpp"

namespace pdconv {
namespace {

template <typename T>
Tensor<T> rand_tensor(Shape s, Rng& rng) {
  return random_uniform<T>(s, rng, -1.0, 1.0);
}

TEST(Tensor, IndexLayoutIsNchwRowMajor) {
  Tensor<float> t(Shape{2, 3, 4, 5});
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t h = 0; h < 4; ++h)
        for (std::int64_t w = 0; w < 5; ++w) EXPECT_EQ(t(n, c, h, w), static_cast<float>(((n * 3 + c) * 4 + h) * 5 + w));
}

TEST(Tensor, RejectsBadShapesAndLengths) {
  EXPECT_THROW(Tensor<float>(Shape{1, 0, 2, 2}), DimensionError);
  EXPECT_THROW(Tensor<float>(Shape{1, 1, 2, 2}, std::vector<float>(3)), DimensionError);
  EXPECT_THROW((void)Tensor<float>(Shape{1, 1, 2, 2}).item(), ContractError);
}

TEST(Conv2d, OnesKernelOnOnesCountsOverlap) {
  Tensor<float> x(Shape{1, 1, 3, 3}, 1.0f);
  ConvWeights<float> w{Tensor<float>(Shape{1, 1, 3, 3}, 1.0f), std::nullopt};
  const auto y = conv2d(x, w, ConvSpec::depthwise(3, 1, 1));
  EXPECT_EQ(y(0, 0, 1, 1), 9.0f);
  EXPECT_EQ(y(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(y(0, 0, 0, 2), 4.0f);
  EXPECT_EQ(y(0, 0, 2, 0), 4.0f);
  EXPECT_EQ(y(0, 0, 2, 2), 4.0f);
  EXPECT_EQ(y(0, 0, 0, 1), 6.0f);
}

TEST(Conv2d, OnesKernelOnConstantScalesOverlapCount) {
  const double c = 2.5;
  Tensor<double> x(Shape{1, 2, 7, 6}, c);
  const ConvSpec spec = ConvSpec::depthwise(5, 1, 2);
  ConvWeights<double> w{Tensor<double>(Shape{2, 1, 5, 5}, 1.0), std::nullopt};
  const auto y = conv2d(x, w, spec);
  for (std::int64_t ch = 0; ch < 2; ++ch) {
    for (std::int64_t h = 0; h < 7; ++h) {
      for (std::int64_t ww = 0; ww < 6; ++ww) {
        const auto rows = std::min<std::int64_t>(h + 2, 6) - std::max<std::int64_t>(h - 2, 0) + 1;
        const auto cols = std::min<std::int64_t>(ww + 2, 5) - std::max<std::int64_t>(ww - 2, 0) + 1;
        EXPECT_DOUBLE_EQ(y(0, ch, h, ww), c * static_cast<double>(rows * cols));
      }
    }
  }
}

TEST(Conv2d, IdentityKernelReturnsInput) {
  Rng rng(1);
  for (int k : {1, 3, 5, 7}) {
    for (int d : {1, 3}) {
      const auto x = rand_tensor<float>(Shape{2, 3, 9, 8}, rng);
      Tensor<float> w(Shape{3, 1, k, k});
      for (int c = 0; c < 3; ++c) w(c, 0, k / 2, k / 2) = 1.0f;
      const auto y = conv2d(x, ConvWeights<float>{w, std::nullopt}, ConvSpec::depthwise(k, d, 3));
      for (std::int64_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]) << "k=" << k << " d=" << d;
    }
  }
}

TEST(Conv2d, CornerHandSum) {
  Rng rng(2);
  const auto x = rand_tensor<double>(Shape{1, 1, 4, 4}, rng);
  const auto wt = rand_tensor<double>(Shape{1, 1, 3, 3}, rng);
  const auto y = conv2d(x, ConvWeights<double>{wt, std::nullopt}, ConvSpec::dense(3));
  const double expect = wt(0, 0, 1, 1) * x(0, 0, 0, 0) + wt(0, 0, 1, 2) * x(0, 0, 0, 1) +
                        wt(0, 0, 2, 1) * x(0, 0, 1, 0) + wt(0, 0, 2, 2) * x(0, 0, 1, 1);
  EXPECT_NEAR(y(0, 0, 0, 0), expect, 1e-15);
}

TEST(Conv2d, SpecExampleDilatedDepthwise) {
  Rng rng(3);
  const auto x = rand_tensor<float>(Shape{1, 2, 5, 5}, rng);
  const auto w = rand_tensor<float>(Shape{2, 1, 3, 3}, rng);
  const ConvSpec spec = ConvSpec::depthwise(3, 2, 2);
  const auto y = conv2d(x, ConvWeights<float>{w, std::nullopt}, spec);
  EXPECT_LE(max_scaled_diff(y, oracle::conv2d<float>(x, w, {}, spec)), 1e-6);
}

struct ConvCase {
  ConvSpec spec;
  std::int64_t cin;
  std::int64_t cout;
  std::int64_t h;
  std::int64_t w;
  bool bias;
};

std::vector<ConvCase> random_cases(std::uint64_t seed, int count) {
  Rng rng(seed);
  std::vector<ConvCase> out;
  const int kernels[] = {1, 3, 5, 7};
  for (int i = 0; i < count; ++i) {
    ConvCase c{};
    const int k = kernels[rng.uniform_int(0, 3)];
    c.spec.kh = c.spec.kw = k;
    c.spec.dilation = static_cast<int>(rng.uniform_int(1, 3));
    c.spec.stride = static_cast<int>(rng.uniform_int(1, 2));
    const bool depthwise = rng.uniform() < 0.5;
    c.cin = rng.uniform_int(1, 4);
    c.cout = depthwise ? c.cin : rng.uniform_int(1, 4);
    c.spec.groups = depthwise ? static_cast<int>(c.cin) : 1;
    if (rng.uniform() < 0.3) {
      c.spec.padding = Padding::explicit_pad;
      c.spec.ph = static_cast<int>(rng.uniform_int(0, 3));
      c.spec.pw = static_cast<int>(rng.uniform_int(0, 3));
    }
    // Include maps smaller than the kernel extent.
    const int min_h = std::max<int>(1, c.spec.extent_h() - 2 * c.spec.pad_h());
    const int min_w = std::max<int>(1, c.spec.extent_w() - 2 * c.spec.pad_w());
    c.h = rng.uniform_int(min_h, min_h + 9);
    c.w = rng.uniform_int(min_w, min_w + 9);
    c.bias = rng.uniform() < 0.5;
    out.push_back(c);
  }
  return out;
}

template <typename T>
void check_against_oracle(double tol) {
  int index = 0;
  for (const auto& c : random_cases(11, 300)) {
    Rng rng(derive_seed(5, static_cast<std::uint64_t>(index++)));
    const auto x = rand_tensor<T>(Shape{2, c.cin, c.h, c.w}, rng);
    const auto wt = rand_tensor<T>(Shape{c.cout, c.cin / c.spec.groups, c.spec.kh, c.spec.kw}, rng);
    ConvWeights<T> cw{wt, std::nullopt};
    std::vector<T> bias;
    if (c.bias) {
      cw.bias = rand_tensor<T>(Shape{1, c.cout, 1, 1}, rng);
      bias.assign(cw.bias->data().begin(), cw.bias->data().end());
    }
    const auto got = conv2d(x, cw, c.spec);
    const auto want = oracle::conv2d<T>(x, wt, bias, c.spec);
    ASSERT_EQ(got.shape(), want.shape()) << c.spec.str();
    ASSERT_LE(max_scaled_diff(got, want), tol) << c.spec.str() << " cin=" << c.cin << " cout=" << c.cout
                                               << " hw=" << c.h << "x" << c.w;
  }
}

TEST(Conv2d, MatchesLoopOracleF64) { check_against_oracle<double>(1e-13); }
TEST(Conv2d, MatchesLoopOracleF32) { check_against_oracle<float>(1e-6); }

TEST(Conv2d, PaperOperatorsOnTinyMaps) {
  // Every PDC / CLK kernel on maps from 1x1 up to beyond the extent.
  for (int c : {1, 2, 8}) {
    for (auto [k, d] : {std::pair{5, 1}, std::pair{7, 3}}) {
      for (int size = 1; size <= 22; ++size) {
        Rng rng(static_cast<std::uint64_t>(size * 100 + c));
        const ConvSpec spec = ConvSpec::depthwise(k, d, c);
        const auto x = rand_tensor<double>(Shape{1, c, size, size + 1}, rng);
        const auto wt = rand_tensor<double>(Shape{c, 1, k, k}, rng);
        const auto got = conv2d(x, ConvWeights<double>{wt, std::nullopt}, spec);
        ASSERT_LE(max_scaled_diff(got, oracle::conv2d<double>(x, wt, {}, spec)), 1e-13)
            << "k=" << k << " d=" << d << " c=" << c << " size=" << size;
      }
    }
  }
}

TEST(Conv2d, Linearity) {
  for (int i = 0; i < 100; ++i) {
    Rng rng(derive_seed(21, static_cast<std::uint64_t>(i)));
    const int c = static_cast<int>(rng.uniform_int(1, 3));
    const ConvSpec spec = i % 2 ? ConvSpec::depthwise(5, 1, c) : ConvSpec::depthwise(7, 3, c);
    const auto wt = rand_tensor<double>(Shape{c, 1, spec.kh, spec.kw}, rng);
    const auto x = rand_tensor<double>(Shape{1, c, 9, 9}, rng);
    const auto y = rand_tensor<double>(Shape{1, c, 9, 9}, rng);
    const double a = rng.uniform(-2, 2);
    const double b = rng.uniform(-2, 2);
    Tensor<double> mix(x.shape());
    for (std::int64_t j = 0; j < x.size(); ++j) mix[j] = a * x[j] + b * y[j];
    const ConvWeights<double> cw{wt, std::nullopt};
    const auto lhs = conv2d(mix, cw, spec);
    const auto cx = conv2d(x, cw, spec);
    const auto cy = conv2d(y, cw, spec);
    Tensor<double> rhs(lhs.shape());
    for (std::int64_t j = 0; j < rhs.size(); ++j) rhs[j] = a * cx[j] + b * cy[j];
    ASSERT_LE(max_scaled_diff(lhs, rhs), 1e-10);

    const auto xf = cast<float>(x);
    const auto yf = cast<float>(y);
    const auto mixf = cast<float>(mix);
    const ConvWeights<float> cwf{cast<float>(wt), std::nullopt};
    const auto lf = conv2d(mixf, cwf, spec);
    const auto cxf = conv2d(xf, cwf, spec);
    const auto cyf = conv2d(yf, cwf, spec);
    Tensor<float> rf(lf.shape());
    for (std::int64_t j = 0; j < rf.size(); ++j) rf[j] = static_cast<float>(a) * cxf[j] + static_cast<float>(b) * cyf[j];
    ASSERT_LE(max_scaled_diff(lf, rf), 1e-5);
  }
}

TEST(Conv2d, Deterministic) {
  Rng rng(4);
  const auto x = rand_tensor<float>(Shape{2, 8, 17, 19}, rng);
  const auto wt = rand_tensor<float>(Shape{8, 8, 3, 3}, rng);
  const auto a = conv2d(x, ConvWeights<float>{wt, std::nullopt}, ConvSpec::dense(3));
  const auto b = conv2d(x, ConvWeights<float>{wt, std::nullopt}, ConvSpec::dense(3));
  for (std::int64_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
}

// <conv(x), g> == <x, grad_input(g)> and == <w, grad_weight(g, x)>.
TEST(Conv2d, GradientsAreAdjoints) {
  int index = 0;
  for (const auto& c : random_cases(12, 150)) {
    Rng rng(derive_seed(6, static_cast<std::uint64_t>(index++)));
    const auto x = rand_tensor<double>(Shape{2, c.cin, c.h, c.w}, rng);
    const auto wt = rand_tensor<double>(Shape{c.cout, c.cin / c.spec.groups, c.spec.kh, c.spec.kw}, rng);
    const auto y = conv2d(x, ConvWeights<double>{wt, std::nullopt}, c.spec);
    const auto g = rand_tensor<double>(y.shape(), rng);
    double lhs = 0.0;
    for (std::int64_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
    const auto gx = conv2d_grad_input(g, wt, c.spec, x.shape());
    double rhs_x = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) rhs_x += x[i] * gx[i];
    Tensor<double> gw(wt.shape());
    Tensor<double> gb(Shape{1, c.cout, 1, 1});
    conv2d_grad_weight(g, x, c.spec, gw, &gb);
    double rhs_w = 0.0;
    for (std::int64_t i = 0; i < wt.size(); ++i) rhs_w += wt[i] * gw[i];
    const double scale = std::max(1.0, std::fabs(lhs));
    ASSERT_NEAR(lhs, rhs_x, 1e-12 * scale) << c.spec.str();
    ASSERT_NEAR(lhs, rhs_w, 1e-12 * scale) << c.spec.str();
    for (std::int64_t oc = 0; oc < c.cout; ++oc) {
      double sum = 0.0;
      for (std::int64_t n = 0; n < g.n(); ++n)
        for (std::int64_t i = 0; i < g.shape().plane(); ++i) sum += g.plane(n, oc)[i];
      ASSERT_NEAR(gb[oc], sum, 1e-12 * std::max(1.0, std::fabs(sum)));
    }
  }
}

TEST(Conv2d, ShapeErrorsNameTheAxis) {
  Tensor<float> x(Shape{1, 3, 8, 8});
  try {
    (void)conv2d(x, ConvWeights<float>{Tensor<float>(Shape{3, 2, 3, 3}), std::nullopt}, ConvSpec::dense(3));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("input-channel"), std::string::npos);
  }
  EXPECT_THROW((void)conv2d(x, ConvWeights<float>{Tensor<float>(Shape{3, 1, 3, 3}), std::nullopt},
                            ConvSpec::depthwise(5, 1, 3)),
               DimensionError);
  EXPECT_THROW((void)conv2d(x, ConvWeights<float>{Tensor<float>(Shape{4, 1, 3, 3}), std::nullopt},
                            ConvSpec::depthwise(3, 1, 3)),
               DimensionError);
  ConvSpec even = ConvSpec::dense(3);
  even.kh = even.kw = 4;
  EXPECT_THROW((void)conv2d(x, ConvWeights<float>{Tensor<float>(Shape{3, 3, 4, 4}), std::nullopt}, even), ConfigError);
  ConvSpec valid = ConvSpec::dense(7);
  valid.padding = Padding::explicit_pad;
  EXPECT_THROW((void)conv2d(Tensor<float>(Shape{1, 3, 4, 4}),
                            ConvWeights<float>{Tensor<float>(Shape{3, 3, 7, 7}), std::nullopt}, valid),
               DimensionError);
  EXPECT_THROW((void)conv2d(x, ConvWeights<float>{Tensor<float>(Shape{3, 3, 3, 3}), Tensor<float>(Shape{1, 2, 1, 1})},
                            ConvSpec::dense(3)),
               DimensionError);
}

TEST(ConvSpec, ExtentAndClassification) {
  EXPECT_EQ(ConvSpec::depthwise(7, 3, 4).extent_h(), 19);
  EXPECT_EQ(ConvSpec::depthwise(5, 1, 4).extent_w(), 5);
  EXPECT_TRUE(ConvSpec::depthwise(5, 1, 4).is_depthwise(4));
  EXPECT_FALSE(ConvSpec::depthwise(5, 1, 4).is_pointwise());
  EXPECT_TRUE(ConvSpec::pointwise().is_pointwise());
  EXPECT_EQ(ConvSpec::dense(3, 2).out_h(48), 24);
  EXPECT_EQ(ConvSpec::dense(3, 2).out_h(7), 4);
}

TEST(PointwiseConv, IdentityAndSum) {
  Rng rng(7);
  const auto x = rand_tensor<float>(Shape{2, 2, 5, 4}, rng);
  Tensor<float> eye(Shape{2, 2, 1, 1});
  eye(0, 0, 0, 0) = eye(1, 1, 0, 0) = 1.0f;
  const auto y = pointwise_conv(x, ConvWeights<float>{eye, std::nullopt});
  for (std::int64_t i = 0; i < x.size(); ++i) ASSERT_EQ(y[i], x[i]);
  const auto s = pointwise_conv(x, ConvWeights<float>{Tensor<float>(Shape{1, 2, 1, 1}, 1.0f), std::nullopt});
  ASSERT_EQ(s.c(), 1);
  for (std::int64_t n = 0; n < 2; ++n)
    for (std::int64_t h = 0; h < 5; ++h)
      for (std::int64_t w = 0; w < 4; ++w) ASSERT_EQ(s(n, 0, h, w), x(n, 0, h, w) + x(n, 1, h, w));
}

TEST(PointwiseConv, MatchesOracleAndRejectsSpatialKernel) {
  Rng rng(8);
  const auto x = rand_tensor<float>(Shape{2, 5, 6, 7}, rng);
  const auto w = rand_tensor<float>(Shape{3, 5, 1, 1}, rng);
  const auto b = rand_tensor<float>(Shape{1, 3, 1, 1}, rng);
  const auto y = pointwise_conv(x, ConvWeights<float>{w, b});
  const std::vector<float> bias(b.data().begin(), b.data().end());
  EXPECT_LE(max_scaled_diff(y, oracle::conv2d<float>(x, w, bias, ConvSpec::pointwise())), 1e-6);
  EXPECT_THROW((void)pointwise_conv(x, ConvWeights<float>{Tensor<float>(Shape{3, 5, 3, 3}), std::nullopt}),
               ConfigError);
}

TEST(Elementwise, IdentitiesAndRoundTrip) {
  Rng rng(9);
  const auto a = rand_tensor<double>(Shape{1, 2, 4, 4}, rng);
  const auto ones = Tensor<double>(a.shape(), 1.0);
  const auto p = elementwise(ElementwiseOp::mul, a, ones);
  for (std::int64_t i = 0; i < a.size(); ++i) ASSERT_EQ(p[i], a[i]);
  const auto z = elementwise(ElementwiseOp::add, a, scale(a, -1.0));
  for (std::int64_t i = 0; i < a.size(); ++i) ASSERT_EQ(z[i], 0.0);
  auto b = random_uniform<double>(a.shape(), rng, 0.5, 2.0);
  const auto back = elementwise(ElementwiseOp::div, elementwise(ElementwiseOp::mul, a, b), b);
  EXPECT_LE(max_scaled_diff(back, a), 1e-6);
  const auto d = elementwise(ElementwiseOp::sub, a, a);
  EXPECT_EQ(max_abs(d), 0.0);
  EXPECT_THROW((void)elementwise(ElementwiseOp::add, a, Tensor<double>(Shape{1, 2, 4, 3})), DimensionError);
}

TEST(FlopCount, ClosedForms) {
  EXPECT_EQ(flop_count(ConvSpec::depthwise(21, 1, 8), 8, 8, 32, 32), 3612672);
  const std::int64_t clk_dw = flop_count(ConvSpec::depthwise(5, 1, 8), 8, 8, 32, 32) +
                              flop_count(ConvSpec::depthwise(7, 3, 8), 8, 8, 32, 32);
  EXPECT_EQ(clk_dw, 606208);
  EXPECT_EQ(clk_dw * 441, 3612672LL * 74);
  EXPECT_EQ(flop_count(ConvSpec::dense(3), 4, 6, 10, 12), 10 * 12 * 6 * 4 * 9);
  EXPECT_EQ(flop_count(ConvSpec::dense(3, 2), 4, 6, 10, 12), 5 * 6 * 6 * 4 * 9);
}

}  // namespace
}  // namespace pdconv
