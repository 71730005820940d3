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

#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "pdconv/errors.hpp"

namespace pdconv {

/// Element type codes shared by the .pdt and .pdck formats.
enum class DType : std::uint8_t { f32 = 1, f64 = 2, i32 = 3 };

template <typename T>
constexpr DType dtype_of() {
  if constexpr (std::is_same_v<T, float>) {
    return DType::f32;
  } else if constexpr (std::is_same_v<T, double>) {
    return DType::f64;
  } else {
    static_assert(std::is_same_v<T, std::int32_t>, "unsupported element type");
    return DType::i32;
  }
}

std::string to_string(DType dtype);
std::size_t dtype_size(DType dtype);

/// Batch-channel-height-width extents. Every axis is at least 1.
struct Shape {
  std::int64_t n = 1;
  std::int64_t c = 1;
  std::int64_t h = 1;
  std::int64_t w = 1;

  std::int64_t numel() const { return n * c * h * w; }
  std::int64_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;

  /// Throws DimensionError naming the first non-positive axis.
  void validate() const;
};

/// Dense rank-4 array, row major in NCHW order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : Tensor(Shape{}) {}
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape) {
    shape_.validate();
    data_.assign(static_cast<std::size_t>(shape_.numel()), fill);
  }
  Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    shape_.validate();
    if (static_cast<std::int64_t>(data_.size()) != shape_.numel()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_.str());
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{}, value); }

  const Shape& shape() const { return shape_; }
  std::int64_t n() const { return shape_.n; }
  std::int64_t c() const { return shape_.c; }
  std::int64_t h() const { return shape_.h; }
  std::int64_t w() const { return shape_.w; }
  std::int64_t size() const { return shape_.numel(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }
  const T& operator()(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(index(n, c, h, w))];
  }
  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  /// Pointer to the (n, c) spatial plane.
  T* plane(std::int64_t n, std::int64_t c) { return data_.data() + index(n, c, 0, 0); }
  const T* plane(std::int64_t n, std::int64_t c) const { return data_.data() + index(n, c, 0, 0); }

  T item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + shape_.str());
    return data_[0];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data, new extents of equal element count.
  Tensor reshaped(Shape shape) const { return Tensor(shape, data_); }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& src) {
  std::vector<To> out(src.data().begin(), src.data().end());
  return Tensor<To>(src.shape(), std::move(out));
}

/// Throws DimensionError naming the first axis where the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

/// Largest |a-b| / max(|a|,|b|,floor) over all elements.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b, double floor = 1e-12);

/// max |a - ref| / max(max |ref|, floor): deviation relative to the scale of
/// the reference tensor.
template <typename T>
double max_scaled_diff(const Tensor<T>& a, const Tensor<T>& ref, double floor = 1e-300);

template <typename T>
double max_abs(const Tensor<T>& a);

template <typename T>
bool all_finite(const Tensor<T>& a);

}  // namespace pdconv
