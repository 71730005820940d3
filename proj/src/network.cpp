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

#include "pdconv/network.hpp"

#include <map>

namespace pdconv {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::vanilla_baseline: return "vanilla-baseline";
    case Variant::swap: return "swap";
    case Variant::pdc_only: return "pdc-only";
    case Variant::cpdc_only: return "cpdc-only";
  }
  return "unknown";
}

const std::vector<std::string>& variant_names() {
  static const std::vector<std::string> names = {"full", "vanilla-baseline", "swap", "pdc-only", "cpdc-only"};
  return names;
}

std::optional<Variant> parse_variant(const std::string& name) {
  for (Variant v : {Variant::full, Variant::vanilla_baseline, Variant::swap, Variant::pdc_only, Variant::cpdc_only}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

void NetConfig::validate() const {
  if (num_classes < 2 || num_classes > 1000) throw ConfigError("num_classes must be in [2, 1000]");
  for (int c : channels) {
    if (c < 1 || c > 1024) throw ConfigError("stage channels must be in [1, 1024]");
  }
  if (blocks < 0 || blocks > 8) throw ConfigError("blocks per stage must be in [0, 8]");
  if (decoder_low < 1 || decoder_high < 1) throw ConfigError("decoder widths must be positive");
  if (!(alpha_fixed >= 0.0 && alpha_fixed <= 1.0)) throw ConfigError("fixed alpha must be in [0, 1]");
}

namespace {

struct Placement {
  bool rgb_cascade;
  bool rgb_pdc;
  bool depth_cascade;
  bool depth_pdc;
};

Placement placement(Variant v) {
  switch (v) {
    case Variant::full: return {true, true, false, true};
    case Variant::vanilla_baseline: return {true, false, false, false};
    case Variant::swap: return {false, true, true, true};
    case Variant::pdc_only: return {true, false, false, true};
    case Variant::cpdc_only: return {true, true, false, false};
  }
  return {true, true, false, true};
}

template <typename T>
Branch<T> make_branch(std::int64_t in_channels, bool cascade, bool pdc, const NetConfig& cfg, Rng& rng) {
  Branch<T> b;
  const std::int64_t c0 = cfg.channels[0];
  b.stem = Conv<T>::make(in_channels, c0, 3, 1, rng);
  b.stem_norm = Norm<T>::make(c0);
  std::int64_t prev = c0;
  for (std::size_t s = 0; s < 3; ++s) {
    const std::int64_t c = cfg.channels[s];
    Stage<T>& st = b.stages[s];
    st.transition = Conv<T>::make(prev, c, 3, 2, rng);
    st.transition_norm = Norm<T>::make(c);
    for (int i = 0; i < cfg.blocks; ++i) {
      st.blocks.push_back({Conv<T>::make(c, c, 3, 1, rng), Norm<T>::make(c), Conv<T>::make(c, c, 3, 1, rng),
                           Norm<T>::make(c)});
    }
    b.context[s] = ContextModule<T>::make(c, cascade, pdc, cfg, rng);
    prev = c;
  }
  return b;
}

}  // namespace

template <typename T>
ContextModule<T> ContextModule<T>::make(std::int64_t channels, bool cascade, bool pdc, const NetConfig& cfg, Rng& rng) {
  ContextModule m;
  m.kernels.push_back(PdcKernel<T>::make(channels, kLocalKernel, kLocalDilation, rng));
  if (cascade) m.kernels.push_back(PdcKernel<T>::make(channels, kLongKernel, kLongDilation, rng));
  for (auto& k : m.kernels) {
    if (!pdc) {
      k.alpha_mode = AlphaMode::fixed;
      k.alpha_fixed = 0.0;
    } else {
      k.alpha_mode = cfg.alpha_mode;
      k.alpha_fixed = cfg.alpha_fixed;
    }
  }
  return m;
}

template <typename T>
Var<T> ContextModule<T>::operator()(const Var<T>& x) const {
  Var<T> y = x;
  for (const auto& k : kernels) y = pdc_forward(y, k);
  return y;
}

template <typename T>
void ContextModule<T>::collect(ParamList<T>& out, const std::string& prefix) {
  if (kernels.size() == 1) {
    kernels[0].collect(out, prefix + ".pdc5");
  } else {
    kernels[0].collect(out, prefix + ".pdc5");
    kernels[1].collect(out, prefix + ".pdc7");
  }
}

template <typename T>
Var<T> ResBlock<T>::operator()(const Var<T>& x) const {
  Var<T> h = ag::relu(norm1(conv1(x)));
  return ag::relu(ag::add(x, norm2(conv2(h))));
}

template <typename T>
void ResBlock<T>::collect(ParamList<T>& out, const std::string& prefix) {
  conv1.collect(out, prefix + ".conv1");
  norm1.collect(out, prefix + ".norm1");
  conv2.collect(out, prefix + ".conv2");
  norm2.collect(out, prefix + ".norm2");
}

template <typename T>
Var<T> Stage<T>::operator()(const Var<T>& x) const {
  Var<T> y = ag::relu(transition_norm(transition(x)));
  for (const auto& b : blocks) y = b(y);
  return y;
}

template <typename T>
void Stage<T>::collect(ParamList<T>& out, const std::string& prefix) {
  transition.collect(out, prefix + ".transition");
  transition_norm.collect(out, prefix + ".transition_norm");
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, prefix + ".block" + std::to_string(i + 1));
}

template <typename T>
void Branch<T>::collect(ParamList<T>& out, const std::string& prefix) {
  stem.collect(out, prefix + ".stem");
  stem_norm.collect(out, prefix + ".stem_norm");
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string sp = prefix + ".stage" + std::to_string(s + 1);
    stages[s].collect(out, sp);
    context[s].collect(out, sp + ".context");
  }
}

template <typename T>
ToyPdcNet<T>::ToyPdcNet(const NetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const Placement p = placement(cfg_.variant);
  rgb_ = make_branch<T>(3, p.rgb_cascade, p.rgb_pdc, cfg_, rng);
  depth_ = make_branch<T>(1, p.depth_cascade, p.depth_pdc, cfg_, rng);
  for (std::size_t s = 0; s < 3; ++s) ecf_[s] = EcfLayer<T>::make(cfg_.channels[s], rng);
  proj_low_ = Pointwise<T>::make(cfg_.channels[0], cfg_.decoder_low, rng);
  proj_high_ = Pointwise<T>::make(cfg_.channels[2], cfg_.decoder_high, rng);
  classifier_ = Pointwise<T>::make(cfg_.decoder_low + cfg_.decoder_high, cfg_.num_classes, rng);
}

template <typename T>
Var<T> ToyPdcNet<T>::forward(const Var<T>& rgb, const Var<T>& depth) const {
  const Shape in = rgb.shape();
  if (in.c != 3) throw DimensionError("rgb channel axis must be 3, got " + std::to_string(in.c));
  if (depth.shape().c != 1) throw DimensionError("depth channel axis must be 1, got " + std::to_string(depth.shape().c));
  if (depth.shape().n != in.n) throw DimensionError("rgb and depth batch axes differ");
  if (depth.shape().h != in.h) throw DimensionError("rgb and depth height axes differ");
  if (depth.shape().w != in.w) throw DimensionError("rgb and depth width axes differ");

  Var<T> r = ag::relu(rgb_.stem_norm(rgb_.stem(rgb)));
  Var<T> d = ag::relu(depth_.stem_norm(depth_.stem(depth)));
  Var<T> low;
  Var<T> high;
  for (std::size_t s = 0; s < 3; ++s) {
    r = rgb_.stages[s](r);
    d = depth_.stages[s](d);
    const Var<T> hat_r = rgb_.context[s](r);
    const Var<T> hat_d = depth_.context[s](d);
    r = ecf_fuse(r, d, hat_r, hat_d, ecf_[s]);
    if (s == 0) low = r;
    if (s == 2) high = r;
  }
  Var<T> lo = ag::relu(proj_low_(low));
  Var<T> hi = ag::upsample_bilinear(ag::relu(proj_high_(high)), lo.shape().h, lo.shape().w);
  Var<T> logits = classifier_(ag::concat_channels(lo, hi));
  return ag::upsample_bilinear(logits, in.h, in.w);
}

template <typename T>
Tensor<T> ToyPdcNet<T>::forward(const Tensor<T>& rgb, const Tensor<T>& depth) const {
  return eval_no_grad<T>([&] { return forward(Var<T>::constant(rgb), Var<T>::constant(depth)); });
}

template <typename T>
ParamList<T> ToyPdcNet<T>::parameters() {
  ParamList<T> out;
  rgb_.collect(out, "rgb");
  depth_.collect(out, "depth");
  for (std::size_t s = 0; s < 3; ++s) ecf_[s].collect(out, "ecf" + std::to_string(s + 1));
  proj_low_.collect(out, "decoder.proj_low");
  proj_high_.collect(out, "decoder.proj_high");
  classifier_.collect(out, "decoder.classifier");
  return out;
}

template <typename T>
std::int64_t ToyPdcNet<T>::parameter_count() {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.var->value().size();
  return n;
}

template <typename T>
std::vector<CheckpointEntry> ToyPdcNet<T>::state() {
  std::vector<CheckpointEntry> out;
  for (const auto& p : parameters()) {
    const Tensor<float> v = cast<float>(p.var->value());
    out.push_back({p.name, to_raw(v)});
  }
  return out;
}

template <typename T>
void ToyPdcNet<T>::load_state(const std::vector<CheckpointEntry>& entries) {
  std::map<std::string, const RawArray*> by_name;
  for (const auto& e : entries) {
    if (!by_name.emplace(e.name, &e.array).second) throw FormatError("duplicate tensor name " + e.name);
  }
  auto params = parameters();
  std::map<std::string, Var<T>*> wanted;
  for (const auto& p : params) wanted.emplace(p.name, p.var);
  for (const auto& [name, raw] : by_name) {
    if (!wanted.count(name)) throw FormatError("unknown tensor name " + name);
  }
  std::vector<std::pair<Var<T>*, Tensor<T>>> staged;
  for (const auto& p : params) {
    auto it = by_name.find(p.name);
    if (it == by_name.end()) throw FormatError("missing tensor " + p.name);
    Tensor<T> v = to_tensor<T>(*it->second);
    if (it->second->dims.size() != 4 || !(v.shape() == p.var->value().shape())) {
      throw FormatError("shape mismatch for " + p.name + ": expected " + p.var->value().shape().str());
    }
    staged.emplace_back(p.var, std::move(v));
  }
  for (auto& [var, value] : staged) var->mutable_value() = std::move(value);
}

template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& logits) {
  const auto N = logits.n();
  const auto C = logits.c();
  const auto P = logits.h() * logits.w();
  std::vector<std::int32_t> out(static_cast<std::size_t>(N * P));
  for (std::int64_t n = 0; n < N; ++n) {
    for (std::int64_t p = 0; p < P; ++p) {
      std::int32_t best = 0;
      T best_v = logits[(n * C) * P + p];
      for (std::int64_t c = 1; c < C; ++c) {
        const T v = logits[(n * C + c) * P + p];
        if (v > best_v) {
          best_v = v;
          best = static_cast<std::int32_t>(c);
        }
      }
      out[static_cast<std::size_t>(n * P + p)] = best;
    }
  }
  return out;
}

template struct ContextModule<float>;
template struct ContextModule<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;
template struct Stage<float>;
template struct Stage<double>;
template struct Branch<float>;
template struct Branch<double>;
template class ToyPdcNet<float>;
template class ToyPdcNet<double>;
template struct ContextModule<long double>;
template struct ResBlock<long double>;
template struct Stage<long double>;
template struct Branch<long double>;
template class ToyPdcNet<long double>;
template std::vector<std::int32_t> argmax_channels(const Tensor<float>&);
template std::vector<std::int32_t> argmax_channels(const Tensor<double>&);

}  // namespace pdconv
