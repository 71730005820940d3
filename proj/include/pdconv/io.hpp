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

// Binary interchange formats. All integers and payloads are little endian.
//
//   .pdt   "PDT1" | u8 dtype | u8 ndim | ndim x u32 dims | raw data
//   .pdck  "PDCK" | u32 version | u32 count |
//          count x (u16 name_len | name | u8 dtype | u8 ndim | ndim x u32 dims | raw data)
//
// dtype codes: 1 = f32, 2 = f64, 3 = i32.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pdconv/tensor.hpp"

namespace pdconv {

/// Untyped n-dimensional array as stored on disk.
struct RawArray {
  DType dtype = DType::f32;
  std::vector<std::uint32_t> dims;
  std::vector<std::byte> bytes;

  std::int64_t numel() const;
  bool operator==(const RawArray&) const = default;
};

template <typename T>
RawArray to_raw(std::span<const T> values, std::vector<std::uint32_t> dims);

/// Rank-4 tensor as a 4-d array.
template <typename T>
RawArray to_raw(const Tensor<T>& t) {
  return to_raw<T>(t.data(), {static_cast<std::uint32_t>(t.n()), static_cast<std::uint32_t>(t.c()),
                              static_cast<std::uint32_t>(t.h()), static_cast<std::uint32_t>(t.w())});
}

/// Decodes values; f32 / f64 payloads convert to T, i32 only to int32.
template <typename T>
std::vector<T> raw_values(const RawArray& raw);

/// Up to four dims, right-aligned into (n, c, h, w).
template <typename T>
Tensor<T> to_tensor(const RawArray& raw);

std::vector<std::byte> encode_pdt(const RawArray& raw);
/// Throws FormatError on wrong magic, unknown dtype or truncated payload.
RawArray decode_pdt(std::span<const std::byte> bytes);

void write_pdt(const std::filesystem::path& path, const RawArray& raw);
RawArray read_pdt(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  RawArray array;
  bool operator==(const CheckpointEntry&) const = default;
};

std::vector<std::byte> encode_checkpoint(const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::byte> bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries);
std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames it into place, so readers never
/// observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

/// Throws IoError if the file cannot be opened.
std::vector<std::byte> read_file(const std::filesystem::path& path);

}  // namespace pdconv
