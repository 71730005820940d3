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

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "pdconv/clk.hpp"
#include "pdconv/gradcheck.hpp"
#include "pdconv/io.hpp"
#include "pdconv/metrics.hpp"
#include "pdconv/pdc.hpp"
#include "pdconv/scene.hpp"

namespace py = pybind11;

namespace pdconv {
namespace {

template <typename T>
using Array = py::array_t<T, py::array::c_style | py::array::forcecast>;

template <typename T>
Tensor<T> to_tensor4(const Array<T>& a, const char* what) {
  if (a.ndim() != 4) throw DimensionError(std::string(what) + " must be 4-d (N, C, H, W)");
  const Shape s{a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
  return Tensor<T>(s, std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
Array<T> to_array(const Tensor<T>& t) {
  Array<T> out({t.n(), t.c(), t.h(), t.w()});
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
Array<T> conv2d_np(const Array<T>& x, const Array<T>& w, std::optional<Array<T>> bias, int stride, int dilation,
                   int groups) {
  const Tensor<T> weight = to_tensor4(w, "weight");
  ConvSpec spec{static_cast<int>(weight.h()), static_cast<int>(weight.w()), dilation, stride, Padding::same, 0, 0,
                groups};
  std::optional<Tensor<T>> b;
  if (bias) {
    const auto& arr = *bias;
    b = Tensor<T>(Shape{1, static_cast<std::int64_t>(arr.size()), 1, 1},
                  std::vector<T>(arr.data(), arr.data() + arr.size()));
  }
  const Tensor<T> input = to_tensor4(x, "input");
  Tensor<T> y;
  {
    py::gil_scoped_release release;
    y = conv2d(input, ConvWeights<T>{weight, b}, spec);
  }
  return to_array(y);
}

template <typename T>
Array<T> pdc_np(const Array<T>& x, const Array<T>& w, double alpha, int dilation, const std::string& mode) {
  const Tensor<T> input = to_tensor4(x, "input");
  const Tensor<T> weight = to_tensor4(w, "weight");
  PdcMode m;
  if (mode == "rewritten") {
    m = PdcMode::rewritten;
  } else if (mode == "definitional") {
    m = PdcMode::definitional;
  } else {
    throw ConfigError("mode must be 'rewritten' or 'definitional'");
  }
  const ConvSpec spec = ConvSpec::depthwise(static_cast<int>(weight.h()), dilation, static_cast<int>(input.c()));
  NoGradGuard guard;
  const Var<T> y = ag::pdc(Var<T>::constant(input), Var<T>::constant(weight),
                           Var<T>::constant(Tensor<T>::scalar(static_cast<T>(alpha))), spec, m);
  return to_array(y.value());
}

RfMode rf_mode(const std::string& name) {
  const auto m = parse_rf_mode(name);
  if (!m) throw ConfigError("unknown receptive-field mode '" + name + "'");
  return *m;
}

py::array_t<std::int64_t> support_array(const SupportMap& map) {
  py::array_t<std::int64_t> out({map.side(), map.side()});
  std::copy(map.counts.begin(), map.counts.end(), out.mutable_data());
  return out;
}

py::array raw_to_numpy(const RawArray& raw) {
  std::vector<py::ssize_t> dims(raw.dims.begin(), raw.dims.end());
  switch (raw.dtype) {
    case DType::f32: {
      py::array_t<float> a(dims);
      const auto v = raw_values<float>(raw);
      std::copy(v.begin(), v.end(), a.mutable_data());
      return a;
    }
    case DType::f64: {
      py::array_t<double> a(dims);
      const auto v = raw_values<double>(raw);
      std::copy(v.begin(), v.end(), a.mutable_data());
      return a;
    }
    default: {
      py::array_t<std::int32_t> a(dims);
      const auto v = raw_values<std::int32_t>(raw);
      std::copy(v.begin(), v.end(), a.mutable_data());
      return a;
    }
  }
}

template <typename T>
RawArray numpy_to_raw(const py::array& a) {
  const auto arr = Array<T>::ensure(a);
  std::vector<std::uint32_t> dims;
  for (py::ssize_t i = 0; i < arr.ndim(); ++i) dims.push_back(static_cast<std::uint32_t>(arr.shape(i)));
  return to_raw<T>(std::span<const T>(arr.data(), static_cast<std::size_t>(arr.size())), dims);
}

void write_pdt_np(const std::string& path, const py::array& a) {
  const auto kind = a.dtype().kind();
  const auto size = a.dtype().itemsize();
  if (kind == 'f' && size == 4) return write_pdt(path, numpy_to_raw<float>(a));
  if (kind == 'f' && size == 8) return write_pdt(path, numpy_to_raw<double>(a));
  if (kind == 'i' && size == 4) return write_pdt(path, numpy_to_raw<std::int32_t>(a));
  throw FormatError("only float32, float64 and int32 arrays can be written");
}

py::dict metrics_np(const Array<std::int32_t>& pred, const Array<std::int32_t>& truth, int num_classes) {
  const SegMetrics m = metrics(std::span<const std::int32_t>(pred.data(), static_cast<std::size_t>(pred.size())),
                               std::span<const std::int32_t>(truth.data(), static_cast<std::size_t>(truth.size())),
                               num_classes);
  py::dict d;
  d["pixel_acc"] = m.pixel_acc;
  d["miou"] = m.miou;
  d["class_iou"] = m.class_iou;
  return d;
}

py::tuple gen_scene_np(std::uint64_t seed, int height, int width, int num_classes) {
  GenConfig cfg;
  cfg.height = height;
  cfg.width = width;
  cfg.num_classes = num_classes;
  const SegSample s = gen_scene(seed, cfg);
  py::array_t<std::int32_t> labels({height, width});
  std::copy(s.labels.begin(), s.labels.end(), labels.mutable_data());
  return py::make_tuple(to_array(s.rgb), to_array(s.depth), labels);
}

}  // namespace
}  // namespace pdconv

PYBIND11_MODULE(_core, m) {
  using namespace pdconv;
  m.doc() = "Pixel-difference convolution operators";

  py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("conv2d", &conv2d_np<double>, py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(),
        py::arg("stride") = 1, py::arg("dilation") = 1, py::arg("groups") = 1,
        "Zero-padded 'same' convolution of an NCHW float64 array");
  m.def("conv2d_f32", &conv2d_np<float>, py::arg("x"), py::arg("weight"), py::arg("bias") = py::none(),
        py::arg("stride") = 1, py::arg("dilation") = 1, py::arg("groups") = 1);
  m.def("pdc", &pdc_np<double>, py::arg("x"), py::arg("weight"), py::arg("alpha"), py::arg("dilation") = 1,
        py::arg("mode") = "rewritten", "Depthwise pixel-difference convolution, weight (C, 1, k, k)");
  m.def("pdc_f32", &pdc_np<float>, py::arg("x"), py::arg("weight"), py::arg("alpha"), py::arg("dilation") = 1,
        py::arg("mode") = "rewritten");

  m.def("receptive_field", [](const std::string& mode) { return support_array(receptive_field(rf_mode(mode))); },
        py::arg("mode"), "Measured usage counts around one output pixel");
  m.def("analytic_support", [](const std::string& mode) { return support_array(analytic_support(rf_mode(mode))); },
        py::arg("mode"));
  m.def("clk_flops", &clk_flops, py::arg("channels"), py::arg("height"), py::arg("width"));
  m.def("clk_depthwise_flops", &clk_depthwise_flops, py::arg("channels"), py::arg("height"), py::arg("width"));
  m.def("large_kernel_flops", &large_kernel_flops, py::arg("channels"), py::arg("height"), py::arg("width"),
        py::arg("kernel") = 21);

  m.def("metrics", &metrics_np, py::arg("pred"), py::arg("truth"), py::arg("num_classes"));
  m.def("gen_scene", &gen_scene_np, py::arg("seed"), py::arg("height") = 48, py::arg("width") = 48,
        py::arg("num_classes") = 5, "Returns (rgb, depth, labels)");

  m.def("read_pdt", [](const std::string& path) { return raw_to_numpy(read_pdt(path)); }, py::arg("path"));
  m.def("write_pdt", &write_pdt_np, py::arg("path"), py::arg("array"));

  m.def("gradcheck_ops", [] {
    std::vector<std::string> names;
    for (const auto& c : gradcheck_suite()) names.push_back(c.name);
    return names;
  });
  m.def(
      "gradcheck",
      [](const std::string& op, std::uint64_t seed) {
        const GradCase* c = find_grad_case(op);
        if (!c) throw ConfigError("unknown op '" + op + "'");
        const GradReport r = c->run(seed);
        return py::make_tuple(r.passed(), r.max_error());
      },
      py::arg("op"), py::arg("seed") = 0, "Returns (passed, max_rel_err)");
  m.def(
      "pdc_equivalence",
      [](int instances, std::uint64_t seed) {
        const EquivalenceResult r = pdc_equivalence(instances, seed);
        py::dict d;
        d["max_dev_f32"] = r.max_dev_f32;
        d["max_dev_f64"] = r.max_dev_f64;
        d["passed"] = r.passed();
        return d;
      },
      py::arg("instances") = 200, py::arg("seed") = 0);
}
