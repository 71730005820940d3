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

#include "pdconv/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "pdconv/parallel.hpp"

namespace pdconv {

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::f32:
      return "f32";
    case DType::f64:
      return "f64";
    case DType::i32:
      return "i32";
  }
  return "unknown";
}

std::size_t dtype_size(DType dtype) { return dtype == DType::f64 ? 8 : 4; }

std::string Shape::str() const {
  return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
         std::to_string(w) + ")";
}

void Shape::validate() const {
  const char* names[] = {"batch", "channel", "height", "width"};
  const std::int64_t dims[] = {n, c, h, w};
  for (int i = 0; i < 4; ++i) {
    if (dims[i] < 1) {
      throw DimensionError(std::string(names[i]) + " axis must be >= 1, got " + std::to_string(dims[i]));
    }
  }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  const char* names[] = {"batch", "channel", "height", "width"};
  const std::int64_t da[] = {a.n, a.c, a.h, a.w};
  const std::int64_t db[] = {b.n, b.c, b.h, b.w};
  for (int i = 0; i < 4; ++i) {
    if (da[i] != db[i]) {
      throw DimensionError(std::string(what) + ": " + names[i] + " axis mismatch (" +
                           std::to_string(da[i]) + " vs " + std::to_string(db[i]) + ")");
    }
  }
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor) {
  require_same_shape(a.shape(), b.shape(), "max_rel_diff");
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double x = static_cast<double>(a[i]);
    const double y = static_cast<double>(b[i]);
    const double denom = std::max({std::abs(x), std::abs(y), floor});
    worst = std::max(worst, std::abs(x - y) / denom);
  }
  return worst;
}

template <typename T>
double max_scaled_diff(const Tensor<T>& a, const Tensor<T>& ref, double floor) {
  require_same_shape(a.shape(), ref.shape(), "max_scaled_diff");
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(a[i]) - static_cast<double>(ref[i])));
  }
  return worst / std::max(max_abs(ref), floor);
}

template <typename T>
double max_abs(const Tensor<T>& a) {
  double worst = 0.0;
  for (const T v : a.data()) worst = std::max(worst, std::abs(static_cast<double>(v)));
  return worst;
}

template <typename T>
bool all_finite(const Tensor<T>& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](T v) { return std::isfinite(v); });
}

template double max_rel_diff(const Tensor<float>&, const Tensor<float>&, double);
template double max_rel_diff(const Tensor<double>&, const Tensor<double>&, double);
template double max_scaled_diff(const Tensor<float>&, const Tensor<float>&, double);
template double max_scaled_diff(const Tensor<double>&, const Tensor<double>&, double);
template double max_abs(const Tensor<float>&);
template double max_abs(const Tensor<double>&);
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);
template bool all_finite(const Tensor<long double>&);

namespace {

int initial_threads() {
  if (const char* env = std::getenv("PDCONV_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::atomic<int>& thread_cap() {
  static std::atomic<int> cap{initial_threads()};
  return cap;
}

}  // namespace

int thread_count() { return thread_cap().load(std::memory_order_relaxed); }

void set_thread_count(int threads) { thread_cap().store(std::max(1, threads), std::memory_order_relaxed); }

}  // namespace pdconv
