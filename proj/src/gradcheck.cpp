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

#include "pdconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pdconv/clk.hpp"
#include "pdconv/fusion.hpp"
#include "pdconv/network.hpp"

namespace pdconv {

double GradReport::max_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

bool GradReport::passed(double tolerance) const {
  for (const auto& e : entries) {
    if (!(e.max_rel_error <= tolerance)) return false;
  }
  return true;
}

std::vector<std::string> GradReport::lines(double tolerance) const {
  std::vector<std::string> out;
  for (const auto& e : entries) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s %s max_rel_err=%.3e checked=%lld/%lld step=%.0e dtype=%s %s", op.c_str(),
                  e.name.c_str(), e.max_rel_error, static_cast<long long>(e.checked),
                  static_cast<long long>(e.size), step, to_string(dtype).c_str(),
                  e.max_rel_error <= tolerance ? "PASS" : "FAIL");
    out.emplace_back(buf);
  }
  return out;
}

double grad_rel_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::string find_nonfinite(const Var<double>& root) {
  for (Node<double>* node : topological_order(root)) {
    if (!all_finite(node->value)) return node->op;
  }
  return {};
}

namespace {

double eval_loss(const std::function<Var<double>()>& loss, const std::string& op) {
  NoGradGuard guard;
  const Var<double> out = loss();
  const double v = out.value()[0];
  if (!std::isfinite(v)) {
    throw NumericError(op + ": non-finite value during finite differencing");
  }
  return v;
}

}  // namespace

GradReport gradcheck(const std::string& op, const std::function<Var<double>()>& loss,
                     const ParamList<double>& params, double step, double fraction, std::uint64_t seed,
                     const std::function<long double()>& reference) {
  auto evaluate = [&]() -> long double {
    if (!reference) return eval_loss(loss, op);
    const long double v = reference();
    if (!std::isfinite(v)) throw NumericError(op + ": non-finite value during finite differencing");
    return v;
  };
  for (const auto& p : params) p.var->zero_grad();
  const Var<double> root = loss();
  if (root.value().size() != 1) throw ContractError(op + ": gradcheck needs a scalar loss");
  if (const std::string bad = find_nonfinite(root); !bad.empty()) {
    throw NumericError(op + ": non-finite value produced by op '" + bad + "'");
  }
  backward(root);

  GradReport report{op, step, DType::f64, {}};
  Rng rng(seed);
  for (const auto& p : params) {
    Var<double>& var = *p.var;
    const Tensor<double> analytic = var.grad();
    const std::int64_t n = var.value().size();
    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    std::iota(coords.begin(), coords.end(), std::int64_t{0});
    if (fraction < 1.0 && n > 1) {
      const auto k = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(fraction * static_cast<double>(n))));
      for (std::int64_t i = 0; i < k; ++i) {
        const auto j = i + rng.uniform_int(n - i);
        std::swap(coords[static_cast<std::size_t>(i)], coords[static_cast<std::size_t>(j)]);
      }
      coords.resize(static_cast<std::size_t>(k));
    }
    GradEntry entry{p.name, 0.0, static_cast<std::int64_t>(coords.size()), n};
    for (const auto i : coords) {
      double& x = var.mutable_value()[i];
      const double saved = x;
      x = saved + step;
      const double plus = x;
      const long double fp = evaluate();
      x = saved - step;
      const double minus = x;
      const long double fm = evaluate();
      x = saved;
      // Divide by the step actually realized in floating point.
      const long double span = static_cast<long double>(plus) - static_cast<long double>(minus);
      const auto numeric = static_cast<double>((fp - fm) / span);
      entry.max_rel_error = std::max(entry.max_rel_error, grad_rel_error(analytic[i], numeric));
    }
    report.entries.push_back(entry);
  }
  return report;
}

namespace {

using V = Var<double>;
using Tn = Tensor<double>;

Tn rnd(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) { return random_uniform<double>(s, rng, lo, hi); }

// Projects a tensor output to a scalar with fixed random weights.
std::function<V()> projected(std::function<V()> f, Rng& rng) {
  NoGradGuard guard;
  const Shape s = f().shape();
  Tn w = rnd(s, rng);
  return [f = std::move(f), w = std::move(w)] { return ag::weighted_sum(f(), w); };
}

GradReport run_projected(const std::string& name, std::function<V()> f, const ParamList<double>& params, Rng& rng,
                         std::uint64_t seed, double fraction = 1.0) {
  return gradcheck(name, projected(std::move(f), rng), params, kGradStep, fraction, seed);
}

// Elementwise binary op with inputs kept away from zero for div.
GradReport binary_case(const std::string& name, V (*op)(const V&, const V&), bool positive_b, std::uint64_t seed) {
  Rng rng(seed);
  const Shape s{2, 3, 4, 5};
  V a = V::leaf(rnd(s, rng));
  V b = V::leaf(positive_b ? rnd(s, rng, 0.5, 1.5) : rnd(s, rng));
  ParamList<double> ps{{"a", &a}, {"b", &b}};
  return run_projected(name, [&, op] { return op(a, b); }, ps, rng, seed);
}

GradReport conv_case(const std::string& name, ConvSpec spec, std::int64_t cin, std::int64_t cout, bool bias,
                     std::uint64_t seed) {
  Rng rng(seed);
  V x = V::leaf(rnd(Shape{2, cin, 7, 6}, rng));
  V w = V::leaf(rnd(Shape{cout, cin / spec.groups, spec.kh, spec.kw}, rng));
  V b = bias ? V::leaf(rnd(Shape{1, cout, 1, 1}, rng)) : V{};
  ParamList<double> ps{{"input", &x}, {"weight", &w}};
  if (bias) ps.push_back({"bias", &b});
  return run_projected(name, [&, spec] { return ag::conv2d(x, w, b, spec); }, ps, rng, seed);
}

GradReport pdc_case(const std::string& name, PdcMode mode, int k, int d, std::uint64_t seed) {
  Rng rng(seed);
  PdcLayer<double> layer = PdcLayer<double>::make(2, rng, k, d);
  layer.kernel.mode = mode;
  layer.kernel.alpha.mutable_value()[0] = rng.uniform(-1.0, 1.0);
  V x = V::leaf(rnd(Shape{1, 2, 6, 6}, rng));
  ParamList<double> ps{{"input", &x}};
  layer.collect(ps, "pdc_layer");
  return run_projected(name, [&] { return pdc_gated(x, layer); }, ps, rng, seed);
}

std::vector<GradCase> build_suite() {
  std::vector<GradCase> s;
  s.push_back({"identity", "projected identity map", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 3}, rng));
                 ParamList<double> ps{{"input", &x}};
                 return run_projected("identity", [&] { return x; }, ps, rng, seed);
               }});
  s.push_back({"conv2d", "dense 3x3 conv with bias", [](std::uint64_t seed) {
                 return conv_case("conv2d", ConvSpec::dense(3, 1), 3, 4, true, seed);
               }});
  s.push_back({"conv2d_stride2", "dense 3x3 stride-2 conv", [](std::uint64_t seed) {
                 return conv_case("conv2d_stride2", ConvSpec::dense(3, 2), 3, 4, false, seed);
               }});
  s.push_back({"depthwise", "depthwise 3x3 dilation 2", [](std::uint64_t seed) {
                 return conv_case("depthwise", ConvSpec::depthwise(3, 2, 3), 3, 3, false, seed);
               }});
  s.push_back({"pointwise", "1x1 conv with bias", [](std::uint64_t seed) {
                 return conv_case("pointwise", ConvSpec::pointwise(), 3, 2, true, seed);
               }});
  s.push_back({"add", "elementwise sum", [](std::uint64_t seed) { return binary_case("add", &ag::add<double>, false, seed); }});
  s.push_back({"sub", "elementwise difference", [](std::uint64_t seed) { return binary_case("sub", &ag::sub<double>, false, seed); }});
  s.push_back({"mul", "elementwise product", [](std::uint64_t seed) { return binary_case("mul", &ag::mul<double>, false, seed); }});
  s.push_back({"div", "elementwise quotient", [](std::uint64_t seed) { return binary_case("div", &ag::div<double>, true, seed); }});
  s.push_back({"scale", "constant scaling", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 4}, rng));
                 ParamList<double> ps{{"input", &x}};
                 return run_projected("scale", [&] { return ag::scale(x, -1.7); }, ps, rng, seed);
               }});
  s.push_back({"mul_scalar", "product with a learnable scalar", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 4}, rng));
                 V k = V::leaf(Tn::scalar(rng.uniform(-1.0, 1.0)));
                 ParamList<double> ps{{"input", &x}, {"scalar", &k}};
                 return run_projected("mul_scalar", [&] { return ag::mul_scalar(x, k); }, ps, rng, seed);
               }});
  s.push_back({"sum", "sum reduction", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 4}, rng));
                 ParamList<double> ps{{"input", &x}};
                 return gradcheck("sum", [&] { return ag::sum(x); }, ps, kGradStep, 1.0, seed);
               }});
  s.push_back({"mean", "mean reduction", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 4}, rng));
                 ParamList<double> ps{{"input", &x}};
                 return gradcheck("mean", [&] { return ag::mean(x); }, ps, kGradStep, 1.0, seed);
               }});
  s.push_back({"sigmoid", "logistic", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 4}, rng, -4.0, 4.0));
                 ParamList<double> ps{{"input", &x}};
                 return run_projected("sigmoid", [&] { return ag::sigmoid(x); }, ps, rng, seed);
               }});
  s.push_back({"relu", "rectifier (inputs kept away from the kink)", [](std::uint64_t seed) {
                 Rng rng(seed);
                 Tn v = rnd(Shape{1, 2, 3, 4}, rng);
                 for (auto& e : v.data()) e = (e < 0 ? -0.1 : 0.1) + e;
                 V x = V::leaf(std::move(v));
                 ParamList<double> ps{{"input", &x}};
                 return run_projected("relu", [&] { return ag::relu(x); }, ps, rng, seed);
               }});
  s.push_back({"standardize", "spatial standardization with affine", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{2, 3, 4, 5}, rng));
                 V g = V::leaf(rnd(Shape{1, 3, 1, 1}, rng, 0.5, 1.5));
                 V b = V::leaf(rnd(Shape{1, 3, 1, 1}, rng));
                 ParamList<double> ps{{"input", &x}, {"gamma", &g}, {"beta", &b}};
                 return run_projected("standardize", [&] { return ag::standardize(x, g, b); }, ps, rng, seed);
               }});
  s.push_back({"upsample", "bilinear resize 3x5 -> 7x8", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{1, 2, 3, 5}, rng));
                 ParamList<double> ps{{"input", &x}};
                 return run_projected("upsample", [&] { return ag::upsample_bilinear(x, 7, 8); }, ps, rng, seed);
               }});
  s.push_back({"concat", "channel concatenation", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V a = V::leaf(rnd(Shape{2, 2, 3, 3}, rng));
                 V b = V::leaf(rnd(Shape{2, 3, 3, 3}, rng));
                 ParamList<double> ps{{"a", &a}, {"b", &b}};
                 return run_projected("concat", [&] { return ag::concat_channels(a, b); }, ps, rng, seed);
               }});
  s.push_back({"cross_entropy", "mean pixel cross-entropy", [](std::uint64_t seed) {
                 Rng rng(seed);
                 V x = V::leaf(rnd(Shape{2, 4, 3, 3}, rng, -2.0, 2.0));
                 std::vector<std::int32_t> labels(18);
                 for (auto& l : labels) l = static_cast<std::int32_t>(rng.uniform_int(4));
                 ParamList<double> ps{{"logits", &x}};
                 return gradcheck("cross_entropy", [&] { return ag::cross_entropy(x, labels); }, ps, kGradStep, 1.0,
                                  seed);
               }});
  s.push_back({"pdc", "gated PDC, rewritten form, 5x5", [](std::uint64_t seed) {
                 return pdc_case("pdc", PdcMode::rewritten, 5, 1, seed);
               }});
  s.push_back({"pdc_definitional", "gated PDC, definitional form, 3x3 dilation 2", [](std::uint64_t seed) {
                 return pdc_case("pdc_definitional", PdcMode::definitional, 3, 2, seed);
               }});
  s.push_back({"clk", "cascade large kernel", [](std::uint64_t seed) {
                 Rng rng(seed);
                 ClkLayer<double> layer = ClkLayer<double>::make(2, rng);
                 V x = V::leaf(rnd(Shape{1, 2, 9, 8}, rng));
                 ParamList<double> ps{{"input", &x}};
                 layer.collect(ps, "clk");
                 return run_projected("clk", [&] { return clk_forward(x, layer); }, ps, rng, seed);
               }});
  s.push_back({"clk_parallel", "parallel large kernel", [](std::uint64_t seed) {
                 Rng rng(seed);
                 ClkLayer<double> layer = ClkLayer<double>::make(2, rng);
                 V x = V::leaf(rnd(Shape{1, 2, 9, 8}, rng));
                 ParamList<double> ps{{"input", &x}};
                 layer.collect(ps, "clk");
                 return run_projected("clk_parallel", [&] { return parallel_forward(x, layer); }, ps, rng, seed);
               }});
  s.push_back({"cpdc", "cascade PDC with gate", [](std::uint64_t seed) {
                 Rng rng(seed);
                 CpdcLayer<double> layer = CpdcLayer<double>::make(2, rng);
                 layer.stage5.alpha.mutable_value()[0] = rng.uniform(-1.0, 1.0);
                 layer.stage7.alpha.mutable_value()[0] = rng.uniform(-1.0, 1.0);
                 V x = V::leaf(rnd(Shape{1, 2, 9, 8}, rng));
                 ParamList<double> ps{{"input", &x}};
                 layer.collect(ps, "cpdc");
                 return run_projected("cpdc", [&] { return cpdc_forward(x, layer); }, ps, rng, seed);
               }});
  s.push_back({"ecf", "full ECF stage: PDC depth context, CPDC rgb context, fusion", [](std::uint64_t seed) {
                 Rng rng(seed);
                 const std::int64_t C = 2;
                 PdcKernel<double> depth_ctx = PdcKernel<double>::make(C, 5, 1, rng);
                 PdcKernel<double> s5 = PdcKernel<double>::make(C, 5, 1, rng);
                 PdcKernel<double> s7 = PdcKernel<double>::make(C, 7, 3, rng);
                 EcfLayer<double> ecf = EcfLayer<double>::make(C, rng);
                 ecf.eta.mutable_value()[0] = rng.uniform(0.2, 0.8);
                 ecf.lambda.mutable_value()[0] = rng.uniform(0.2, 0.8);
                 V fr = V::leaf(rnd(Shape{1, C, 6, 7}, rng));
                 V fd = V::leaf(rnd(Shape{1, C, 6, 7}, rng));
                 ParamList<double> ps{{"f_rgb", &fr}, {"f_depth", &fd}};
                 depth_ctx.collect(ps, "depth_pdc");
                 s5.collect(ps, "rgb_cpdc.pdc5");
                 s7.collect(ps, "rgb_cpdc.pdc7");
                 ecf.collect(ps, "ecf");
                 return run_projected(
                     "ecf",
                     [&] { return ecf_fuse(fr, fd, cpdc_features(fr, s5, s7), pdc_forward(fd, depth_ctx), ecf); }, ps,
                     rng, seed);
               }});
  s.push_back({"net", "toy network loss, 1% of coordinates plus every alpha / eta / lambda", [](std::uint64_t seed) {
                 NetConfig cfg;
                 cfg.num_classes = 3;
                 cfg.channels = {4, 6, 8};
                 cfg.blocks = 1;
                 cfg.decoder_low = 4;
                 cfg.decoder_high = 4;
                 ToyPdcNet<double> net(cfg, seed);
                 Rng rng(derive_seed(seed, 1));
                 const Tn rgb = rnd(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
                 const Tn depth = rnd(Shape{1, 1, 16, 16}, rng, 0.0, 1.0);
                 std::vector<std::int32_t> labels(256);
                 for (auto& l : labels) l = static_cast<std::int32_t>(rng.uniform_int(3));
                 auto params = net.parameters();
                 for (auto& p : params) {
                   // Move scalars off their symmetric init so their gradients are generic.
                   if (p.var->value().size() == 1) p.var->mutable_value()[0] += rng.uniform(-0.3, 0.3);
                 }
                 auto loss = [&] { return ag::cross_entropy(net.forward(V::constant(rgb), V::constant(depth)), labels); };
                 // Same network in extended precision, synced from the f64 parameters per call.
                 ToyPdcNet<long double> wide(cfg, seed);
                 auto wide_params = wide.parameters();
                 const Tensor<long double> rgb_w = cast<long double>(rgb);
                 const Tensor<long double> depth_w = cast<long double>(depth);
                 auto reference = [&]() -> long double {
                   for (std::size_t i = 0; i < params.size(); ++i) {
                     wide_params[i].var->mutable_value() = cast<long double>(params[i].var->value());
                   }
                   NoGradGuard guard;
                   return ag::cross_entropy(wide.forward(Var<long double>::constant(rgb_w),
                                                         Var<long double>::constant(depth_w)),
                                            labels)
                       .value()[0];
                 };
                 ParamList<double> scalar_ps;
                 ParamList<double> tensor_ps;
                 for (auto& p : params) (p.var->value().size() == 1 ? scalar_ps : tensor_ps).push_back(p);
                 GradReport r = gradcheck("net", loss, tensor_ps, kGradStep, 0.01, seed, reference);
                 GradReport rs = gradcheck("net", loss, scalar_ps, kGradStep, 1.0, seed, reference);
                 r.entries.insert(r.entries.end(), rs.entries.begin(), rs.entries.end());
                 return r;
               }});
  return s;
}

}  // namespace

const std::vector<GradCase>& gradcheck_suite() {
  static const std::vector<GradCase> suite = build_suite();
  return suite;
}

const GradCase* find_grad_case(const std::string& name) {
  for (const auto& c : gradcheck_suite()) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

}  // namespace pdconv
