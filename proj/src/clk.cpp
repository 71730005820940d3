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

#include "pdconv/clk.hpp"

#include <algorithm>
#include <cmath>

namespace pdconv {

template <typename T>
ClkLayer<T> ClkLayer<T>::make(std::int64_t channels, Rng& rng) {
  const int c = static_cast<int>(channels);
  ClkLayer layer;
  layer.local_spec = ConvSpec::depthwise(kLocalKernel, kLocalDilation, c);
  layer.long_spec = ConvSpec::depthwise(kLongKernel, kLongDilation, c);
  layer.local = Var<T>::leaf(fan_in_uniform<T>(Shape{channels, 1, kLocalKernel, kLocalKernel}, rng));
  layer.long_range = Var<T>::leaf(fan_in_uniform<T>(Shape{channels, 1, kLongKernel, kLongKernel}, rng));
  layer.pw = Pointwise<T>::make(channels, channels, rng);
  return layer;
}

template <typename T>
ClkLayer<T> ClkLayer<T>::identity(std::int64_t channels) {
  const int c = static_cast<int>(channels);
  ClkLayer layer;
  layer.local_spec = ConvSpec::depthwise(kLocalKernel, kLocalDilation, c);
  layer.long_spec = ConvSpec::depthwise(kLongKernel, kLongDilation, c);
  Tensor<T> local(Shape{channels, 1, kLocalKernel, kLocalKernel});
  Tensor<T> long_range(Shape{channels, 1, kLongKernel, kLongKernel});
  for (std::int64_t ch = 0; ch < channels; ++ch) {
    local(ch, 0, kLocalKernel / 2, kLocalKernel / 2) = T{1};
    long_range(ch, 0, kLongKernel / 2, kLongKernel / 2) = T{1};
  }
  layer.local = Var<T>::leaf(std::move(local));
  layer.long_range = Var<T>::leaf(std::move(long_range));
  layer.pw = Pointwise<T>::identity(channels);
  return layer;
}

template <typename T>
void ClkLayer<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".local", &local});
  out.push_back({prefix + ".long", &long_range});
  pw.collect(out, prefix + ".pw");
}

namespace {

template <typename T>
void require_channels(const Var<T>& x, std::int64_t channels, const char* what) {
  if (x.shape().c != channels) {
    throw DimensionError(std::string(what) + ": input channel axis " + std::to_string(x.shape().c) +
                         " does not match layer channels " + std::to_string(channels));
  }
}

}  // namespace

template <typename T>
Var<T> clk_forward(const Var<T>& x, const ClkLayer<T>& layer) {
  require_channels(x, layer.channels(), "clk");
  Var<T> local = ag::conv2d(x, layer.local, Var<T>{}, layer.local_spec);
  Var<T> context = ag::conv2d(local, layer.long_range, Var<T>{}, layer.long_spec);
  return layer.pw(context);
}

template <typename T>
Var<T> parallel_forward(const Var<T>& x, const ClkLayer<T>& layer) {
  require_channels(x, layer.channels(), "parallel large kernel");
  Var<T> local = ag::conv2d(x, layer.local, Var<T>{}, layer.local_spec);
  Var<T> context = ag::conv2d(x, layer.long_range, Var<T>{}, layer.long_spec);
  return layer.pw(ag::add(local, context));
}

template <typename T>
CpdcLayer<T> CpdcLayer<T>::make(std::int64_t channels, Rng& rng) {
  CpdcLayer layer;
  layer.stage5 = PdcKernel<T>::make(channels, kLocalKernel, kLocalDilation, rng);
  layer.stage7 = PdcKernel<T>::make(channels, kLongKernel, kLongDilation, rng);
  layer.gate = Pointwise<T>::make(channels, channels, rng);
  return layer;
}

template <typename T>
void CpdcLayer<T>::collect(ParamList<T>& out, const std::string& prefix) {
  stage5.collect(out, prefix + ".pdc5");
  stage7.collect(out, prefix + ".pdc7");
  gate.collect(out, prefix + ".gate");
}

template <typename T>
Var<T> cpdc_features(const Var<T>& x, const PdcKernel<T>& stage5, const PdcKernel<T>& stage7) {
  return pdc_forward(pdc_forward(x, stage5), stage7);
}

template <typename T>
Var<T> cpdc_forward(const Var<T>& x, const CpdcLayer<T>& layer) {
  return ag::mul(layer.gate(cpdc_features(x, layer.stage5, layer.stage7)), x);
}

template struct ClkLayer<float>;
template struct ClkLayer<double>;
template struct CpdcLayer<float>;
template struct CpdcLayer<double>;
template Var<float> clk_forward(const Var<float>&, const ClkLayer<float>&);
template Var<double> clk_forward(const Var<double>&, const ClkLayer<double>&);
template Var<float> parallel_forward(const Var<float>&, const ClkLayer<float>&);
template Var<double> parallel_forward(const Var<double>&, const ClkLayer<double>&);
template Var<float> cpdc_features(const Var<float>&, const PdcKernel<float>&, const PdcKernel<float>&);
template Var<double> cpdc_features(const Var<double>&, const PdcKernel<double>&,
                                   const PdcKernel<double>&);
template Var<float> cpdc_forward(const Var<float>&, const CpdcLayer<float>&);
template Var<double> cpdc_forward(const Var<double>&, const CpdcLayer<double>&);

// ---------------------------------------------------------------------------

std::string to_string(RfMode mode) {
  switch (mode) {
    case RfMode::single5:
      return "single5";
    case RfMode::single7d3:
      return "single7d3";
    case RfMode::cascade:
      return "cascade";
    case RfMode::parallel:
      return "parallel";
    case RfMode::cpdc:
      return "cpdc";
  }
  return "unknown";
}

std::optional<RfMode> parse_rf_mode(const std::string& name) {
  for (RfMode m : {RfMode::single5, RfMode::single7d3, RfMode::cascade, RfMode::parallel, RfMode::cpdc}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

SupportMap::Box SupportMap::bounds() const {
  Box box{radius + 1, radius + 1, -radius - 1, -radius - 1};
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (at(dy, dx) == 0) continue;
      box.top = std::min(box.top, dy);
      box.bottom = std::max(box.bottom, dy);
      box.left = std::min(box.left, dx);
      box.right = std::max(box.right, dx);
    }
  }
  return box;
}

int SupportMap::extent_h() const {
  const Box b = bounds();
  return b.bottom >= b.top ? b.bottom - b.top + 1 : 0;
}

int SupportMap::extent_w() const {
  const Box b = bounds();
  return b.right >= b.left ? b.right - b.left + 1 : 0;
}

std::int64_t SupportMap::holes() const {
  const Box b = bounds();
  std::int64_t zeros = 0;
  for (int dy = b.top; dy <= b.bottom; ++dy) {
    for (int dx = b.left; dx <= b.right; ++dx) zeros += at(dy, dx) == 0 ? 1 : 0;
  }
  return zeros;
}

bool SupportMap::contains(const SupportMap& inner) const {
  for (int dy = -inner.radius; dy <= inner.radius; ++dy) {
    for (int dx = -inner.radius; dx <= inner.radius; ++dx) {
      if (inner.at(dy, dx) == 0) continue;
      if (std::abs(dy) > radius || std::abs(dx) > radius || at(dy, dx) == 0) return false;
    }
  }
  return true;
}

namespace {

Tensor<double> ones_kernel(int k) { return Tensor<double>(Shape{1, 1, k, k}, 1.0); }

PdcKernel<double> ones_pdc(int kernel, int dilation) {
  PdcKernel<double> k;
  k.spec = ConvSpec::depthwise(kernel, dilation, 1);
  k.weight = Var<double>::leaf(ones_kernel(kernel));
  k.alpha = Var<double>::leaf(Tensor<double>::scalar(0.0));
  // The difference term only reweights the center tap, so the probe uses the
  // vanilla blend to keep counts non-negative.
  k.alpha_mode = AlphaMode::fixed;
  k.alpha_fixed = 0.0;
  return k;
}

// Indicator grid of a k x k kernel with the given dilation, as offsets.
std::vector<std::pair<int, int>> taps(int kernel, int dilation) {
  std::vector<std::pair<int, int>> out;
  const int half = kernel / 2;
  for (int i = -half; i <= half; ++i) {
    for (int j = -half; j <= half; ++j) out.emplace_back(i * dilation, j * dilation);
  }
  return out;
}

}  // namespace

SupportMap receptive_field(RfMode mode) {
  const int radius = kSupportRadius;
  const int side = 4 * radius + 1;
  const int center = side / 2;
  Var<double> x = Var<double>::leaf(Tensor<double>(Shape{1, 1, side, side}, 1.0));

  ClkLayer<double> clk;
  clk.local_spec = ConvSpec::depthwise(kLocalKernel, kLocalDilation, 1);
  clk.long_spec = ConvSpec::depthwise(kLongKernel, kLongDilation, 1);
  clk.local = Var<double>::leaf(ones_kernel(kLocalKernel));
  clk.long_range = Var<double>::leaf(ones_kernel(kLongKernel));
  clk.pw = Pointwise<double>::identity(1);

  Var<double> out;
  switch (mode) {
    case RfMode::single5:
      out = ag::conv2d(x, clk.local, Var<double>{}, clk.local_spec);
      break;
    case RfMode::single7d3:
      out = ag::conv2d(x, clk.long_range, Var<double>{}, clk.long_spec);
      break;
    case RfMode::cascade:
      out = clk_forward(x, clk);
      break;
    case RfMode::parallel:
      out = parallel_forward(x, clk);
      break;
    case RfMode::cpdc:
      out = cpdc_features(x, ones_pdc(kLocalKernel, kLocalDilation), ones_pdc(kLongKernel, kLongDilation));
      break;
  }
  Tensor<double> impulse(out.shape());
  impulse(0, 0, center, center) = 1.0;
  backward(ag::weighted_sum(out, impulse));

  const Tensor<double>& g = x.grad();
  SupportMap map{mode, radius, std::vector<std::int64_t>(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)), 0)};
  for (int y = 0; y < side; ++y) {
    for (int xx = 0; xx < side; ++xx) {
      const double v = g(0, 0, y, xx);
      if (v == 0.0) continue;
      const int dy = y - center;
      const int dx = xx - center;
      if (std::abs(dy) > radius || std::abs(dx) > radius) {
        throw ContractError("support of mode " + to_string(mode) + " exceeds probe radius");
      }
      const double rounded = std::round(v);
      if (std::abs(v - rounded) > 1e-9 || rounded < 0.0) {
        throw NumericError("receptive_field: non-integer usage count " + std::to_string(v));
      }
      map.at(dy, dx) = static_cast<std::int64_t>(rounded);
    }
  }
  return map;
}

SupportMap analytic_support(RfMode mode) {
  const int radius = kSupportRadius;
  SupportMap map{mode, radius, std::vector<std::int64_t>(static_cast<std::size_t>((2 * radius + 1) * (2 * radius + 1)), 0)};
  const auto local = taps(kLocalKernel, kLocalDilation);
  const auto long_range = taps(kLongKernel, kLongDilation);
  switch (mode) {
    case RfMode::single5:
      for (auto [dy, dx] : local) map.at(dy, dx) += 1;
      break;
    case RfMode::single7d3:
      for (auto [dy, dx] : long_range) map.at(dy, dx) += 1;
      break;
    case RfMode::parallel:
      for (auto [dy, dx] : local) map.at(dy, dx) += 1;
      for (auto [dy, dx] : long_range) map.at(dy, dx) += 1;
      break;
    case RfMode::cascade:
    case RfMode::cpdc:
      for (auto [ay, ax] : local) {
        for (auto [by, bx] : long_range) map.at(ay + by, ax + bx) += 1;
      }
      break;
  }
  return map;
}

std::string render_ascii(const SupportMap& map) {
  static constexpr char kRamp[] = "123456789";
  std::int64_t peak = 0;
  for (auto v : map.counts) peak = std::max(peak, v);
  std::string out;
  for (int dy = -map.radius; dy <= map.radius; ++dy) {
    for (int dx = -map.radius; dx <= map.radius; ++dx) {
      const std::int64_t v = map.at(dy, dx);
      if (v == 0) {
        out += '.';
      } else if (peak <= 9) {
        out += kRamp[v - 1];
      } else {
        out += kRamp[std::min<std::int64_t>(8, (v - 1) * 9 / peak)];
      }
    }
    out += '\n';
  }
  return out;
}

std::int64_t clk_depthwise_flops(std::int64_t channels, std::int64_t height, std::int64_t width) {
  const int c = static_cast<int>(channels);
  return flop_count(ConvSpec::depthwise(kLocalKernel, kLocalDilation, c), channels, channels, height, width) +
         flop_count(ConvSpec::depthwise(kLongKernel, kLongDilation, c), channels, channels, height, width);
}

std::int64_t clk_flops(std::int64_t channels, std::int64_t height, std::int64_t width) {
  return clk_depthwise_flops(channels, height, width) +
         flop_count(ConvSpec::pointwise(), channels, channels, height, width);
}

std::int64_t large_kernel_flops(std::int64_t channels, std::int64_t height, std::int64_t width, int kernel) {
  const int c = static_cast<int>(channels);
  return flop_count(ConvSpec::depthwise(kernel, 1, c), channels, channels, height, width) +
         flop_count(ConvSpec::pointwise(), channels, channels, height, width);
}

}  // namespace pdconv
