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

#include "pdconv/pdc.hpp"

#include <algorithm>

namespace pdconv {

template <typename T>
PdcKernel<T> PdcKernel<T>::make(std::int64_t channels, int kernel, int dilation, Rng& rng) {
  PdcKernel k;
  k.spec = ConvSpec::depthwise(kernel, dilation, static_cast<int>(channels));
  k.spec.validate();
  k.weight = Var<T>::leaf(fan_in_uniform<T>(Shape{channels, 1, kernel, kernel}, rng));
  k.alpha = Var<T>::leaf(Tensor<T>::scalar(T{0}));
  return k;
}

template <typename T>
void PdcKernel<T>::collect(ParamList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", &weight});
  if (alpha_mode == AlphaMode::learnable) out.push_back({prefix + ".alpha", &alpha});
}

template <typename T>
PdcLayer<T> PdcLayer<T>::make(std::int64_t channels, Rng& rng, int kernel, int dilation) {
  PdcLayer layer;
  layer.kernel = PdcKernel<T>::make(channels, kernel, dilation, rng);
  layer.gate = Pointwise<T>::make(channels, channels, rng);
  return layer;
}

template <typename T>
void PdcLayer<T>::collect(ParamList<T>& out, const std::string& prefix) {
  kernel.collect(out, prefix + ".pdc");
  gate.collect(out, prefix + ".gate");
}

template <typename T>
Var<T> alpha_effective(const PdcKernel<T>& kernel) {
  if (kernel.alpha_mode == AlphaMode::fixed) {
    return Var<T>::constant(Tensor<T>::scalar(static_cast<T>(kernel.alpha_fixed)));
  }
  return ag::sigmoid(kernel.alpha);
}

template <typename T>
Var<T> pdc_forward(const Var<T>& x, const PdcKernel<T>& kernel) {
  if (x.shape().c != kernel.channels()) {
    throw DimensionError("pdc: input channel axis " + std::to_string(x.shape().c) +
                         " does not match layer channels " + std::to_string(kernel.channels()));
  }
  return ag::pdc(x, kernel.weight, alpha_effective(kernel), kernel.spec, kernel.mode);
}

template <typename T>
Var<T> pdc_gated(const Var<T>& x, const PdcLayer<T>& layer) {
  return ag::mul(layer.gate(pdc_forward(x, layer.kernel)), x);
}

namespace {

template <typename T>
Tensor<T> run_form(const Tensor<T>& x, const Tensor<T>& w, double alpha, const ConvSpec& spec, PdcMode mode) {
  NoGradGuard guard;
  return ag::pdc(Var<T>::constant(x), Var<T>::constant(w), Var<T>::constant(Tensor<T>::scalar(static_cast<T>(alpha))),
                 spec, mode)
      .value();
}

}  // namespace

EquivalenceResult pdc_equivalence(int instances, std::uint64_t seed) {
  if (instances < 1) throw ConfigError("instance count must be positive");
  constexpr std::int64_t kChannels[] = {1, 2, 8};
  EquivalenceResult r;
  r.instances = instances;
  for (int i = 0; i < instances; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const bool long_kernel = (i % 2) == 1;
    const int k = long_kernel ? 7 : 5;
    const int d = long_kernel ? 3 : 1;
    const std::int64_t C = kChannels[(i / 2) % 3];
    const auto H = rng.uniform_int(6, 16);
    const auto W = rng.uniform_int(6, 16);
    const double alpha = rng.uniform();
    const ConvSpec spec = ConvSpec::depthwise(k, d, static_cast<int>(C));
    const Tensor<double> x = random_uniform<double>(Shape{1, C, H, W}, rng);
    const Tensor<double> w = random_uniform<double>(Shape{C, 1, k, k}, rng);

    const Tensor<double> def64 = run_form(x, w, alpha, spec, PdcMode::definitional);
    const Tensor<double> rw64 = run_form(x, w, alpha, spec, PdcMode::rewritten);
    const Tensor<float> x32 = cast<float>(x);
    const Tensor<float> w32 = cast<float>(w);
    const Tensor<float> def32 = run_form(x32, w32, alpha, spec, PdcMode::definitional);
    const Tensor<float> rw32 = run_form(x32, w32, alpha, spec, PdcMode::rewritten);

    r.max_dev_f64 = std::max(r.max_dev_f64, max_scaled_diff(rw64, def64));
    r.max_dev_f32 = std::max(r.max_dev_f32, max_scaled_diff(rw32, def32));
    r.max_pointwise_f64 = std::max(r.max_pointwise_f64, max_rel_diff(rw64, def64));
    r.max_pointwise_f32 = std::max(r.max_pointwise_f32, max_rel_diff(rw32, def32));
  }
  return r;
}

template struct PdcKernel<float>;
template struct PdcKernel<double>;
template struct PdcLayer<float>;
template struct PdcLayer<double>;
template Var<float> alpha_effective(const PdcKernel<float>&);
template Var<double> alpha_effective(const PdcKernel<double>&);
template Var<float> pdc_forward(const Var<float>&, const PdcKernel<float>&);
template Var<double> pdc_forward(const Var<double>&, const PdcKernel<double>&);
template Var<float> pdc_gated(const Var<float>&, const PdcLayer<float>&);
template Var<double> pdc_gated(const Var<double>&, const PdcLayer<double>&);
template struct PdcKernel<long double>;
template Var<long double> alpha_effective(const PdcKernel<long double>&);
template Var<long double> pdc_forward(const Var<long double>&, const PdcKernel<long double>&);

}  // namespace pdconv
