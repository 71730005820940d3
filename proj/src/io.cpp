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

#include "pdconv/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <unistd.h>

namespace pdconv {
namespace {

constexpr char kPdtMagic[4] = {'P', 'D', 'T', '1'};
constexpr char kCkptMagic[4] = {'P', 'D', 'C', 'K'};

bool valid_dtype(std::uint8_t code) { return code >= 1 && code <= 3; }

// Little-endian byte sink / source.
class Writer {
 public:
  template <typename U>
  void put(U value) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      out_.push_back(static_cast<std::byte>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
  }
  void put_bytes(const void* data, std::size_t size) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + size);
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<std::uint64_t>(std::to_integer<std::uint8_t>(in_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return static_cast<U>(v);
  }
  std::span<const std::byte> take(std::size_t size, const char* what) {
    need(size, what);
    auto out = in_.subspan(pos_, size);
    pos_ += size;
    return out;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t size, const char* what) {
    if (in_.size() - pos_ < size) {
      throw FormatError(std::string("truncated payload while reading ") + what);
    }
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

// Element payloads are stored little endian; swap on big-endian hosts.
void copy_le(std::byte* dst, const std::byte* src, std::size_t count, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, count * width);
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t b = 0; b < width; ++b) dst[i * width + b] = src[i * width + width - 1 - b];
    }
  }
}

void put_array(Writer& w, const RawArray& raw) {
  if (raw.dims.size() > 255) throw FormatError("too many dimensions");
  w.put<std::uint8_t>(static_cast<std::uint8_t>(raw.dtype));
  w.put<std::uint8_t>(static_cast<std::uint8_t>(raw.dims.size()));
  for (auto d : raw.dims) w.put<std::uint32_t>(d);
  const std::size_t expect = static_cast<std::size_t>(raw.numel()) * dtype_size(raw.dtype);
  if (raw.bytes.size() != expect) throw FormatError("payload size does not match dims");
  w.put_bytes(raw.bytes.data(), raw.bytes.size());
}

RawArray get_array(Reader& r) {
  RawArray raw;
  const auto code = r.get<std::uint8_t>("dtype");
  if (!valid_dtype(code)) throw FormatError("unknown dtype code " + std::to_string(code));
  raw.dtype = static_cast<DType>(code);
  const auto ndim = r.get<std::uint8_t>("ndim");
  raw.dims.resize(ndim);
  for (auto& d : raw.dims) d = r.get<std::uint32_t>("dims");
  const auto payload = r.take(static_cast<std::size_t>(raw.numel()) * dtype_size(raw.dtype), "data");
  raw.bytes.assign(payload.begin(), payload.end());
  return raw;
}

void check_magic(Reader& r, const char (&magic)[4], const char* format) {
  const auto head = r.take(4, "magic");
  if (std::memcmp(head.data(), magic, 4) != 0) {
    throw FormatError(std::string("bad magic: not a ") + format + " file");
  }
}

}  // namespace

std::int64_t RawArray::numel() const {
  std::int64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

template <typename T>
RawArray to_raw(std::span<const T> values, std::vector<std::uint32_t> dims) {
  RawArray raw;
  raw.dtype = dtype_of<T>();
  raw.dims = std::move(dims);
  if (raw.numel() != static_cast<std::int64_t>(values.size())) {
    throw DimensionError("to_raw: dims do not match value count");
  }
  raw.bytes.resize(values.size() * sizeof(T));
  copy_le(raw.bytes.data(), reinterpret_cast<const std::byte*>(values.data()), values.size(), sizeof(T));
  return raw;
}

template <typename T>
std::vector<T> raw_values(const RawArray& raw) {
  const auto count = static_cast<std::size_t>(raw.numel());
  auto decode = [&](auto tag) {
    using U = decltype(tag);
    std::vector<U> tmp(count);
    copy_le(reinterpret_cast<std::byte*>(tmp.data()), raw.bytes.data(), count, sizeof(U));
    return std::vector<T>(tmp.begin(), tmp.end());
  };
  if constexpr (std::is_same_v<T, std::int32_t>) {
    if (raw.dtype != DType::i32) throw FormatError("expected i32 payload, got " + to_string(raw.dtype));
    return decode(std::int32_t{});
  } else {
    if (raw.dtype == DType::f32) return decode(float{});
    if (raw.dtype == DType::f64) return decode(double{});
    throw FormatError("expected floating payload, got " + to_string(raw.dtype));
  }
}

template <typename T>
Tensor<T> to_tensor(const RawArray& raw) {
  if (raw.dims.empty() || raw.dims.size() > 4) {
    throw FormatError("tensor rank must be 1..4, got " + std::to_string(raw.dims.size()));
  }
  std::int64_t d[4] = {1, 1, 1, 1};
  const std::size_t off = 4 - raw.dims.size();
  for (std::size_t i = 0; i < raw.dims.size(); ++i) d[off + i] = raw.dims[i];
  return Tensor<T>(Shape{d[0], d[1], d[2], d[3]}, raw_values<T>(raw));
}

template RawArray to_raw(std::span<const float>, std::vector<std::uint32_t>);
template RawArray to_raw(std::span<const double>, std::vector<std::uint32_t>);
template RawArray to_raw(std::span<const std::int32_t>, std::vector<std::uint32_t>);
template std::vector<float> raw_values(const RawArray&);
template std::vector<double> raw_values(const RawArray&);
template std::vector<std::int32_t> raw_values(const RawArray&);
template Tensor<float> to_tensor(const RawArray&);
template Tensor<double> to_tensor(const RawArray&);
template std::vector<long double> raw_values(const RawArray&);
template Tensor<long double> to_tensor(const RawArray&);

std::vector<std::byte> encode_pdt(const RawArray& raw) {
  Writer w;
  w.put_bytes(kPdtMagic, 4);
  put_array(w, raw);
  return w.take();
}

RawArray decode_pdt(std::span<const std::byte> bytes) {
  Reader r(bytes);
  check_magic(r, kPdtMagic, ".pdt");
  RawArray raw = get_array(r);
  if (!r.done()) throw FormatError("trailing bytes after .pdt payload");
  return raw;
}

void write_pdt(const std::filesystem::path& path, const RawArray& raw) {
  write_file_atomic(path, encode_pdt(raw));
}

RawArray read_pdt(const std::filesystem::path& path) { return decode_pdt(read_file(path)); }

std::vector<std::byte> encode_checkpoint(const std::vector<CheckpointEntry>& entries) {
  Writer w;
  w.put_bytes(kCkptMagic, 4);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xFFFF) throw FormatError("tensor name too long: " + e.name);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.put_bytes(e.name.data(), e.name.size());
    put_array(w, e.array);
  }
  return w.take();
}

std::vector<CheckpointEntry> decode_checkpoint(std::span<const std::byte> bytes) {
  Reader r(bytes);
  check_magic(r, kCkptMagic, ".pdck");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::vector<CheckpointEntry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    const auto len = r.get<std::uint16_t>("name length");
    const auto name = r.take(len, "name");
    e.name.assign(reinterpret_cast<const char*>(name.data()), name.size());
    e.array = get_array(r);
    entries.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint payload");
  return entries;
}

void write_checkpoint(const std::filesystem::path& path, const std::vector<CheckpointEntry>& entries) {
  write_file_atomic(path, encode_checkpoint(entries));
}

std::vector<CheckpointEntry> read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path));
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw IoError("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename into " + path.string() + ": " + ec.message());
  }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
  if (!in) throw IoError("read failed: " + path.string());
  return bytes;
}

}  // namespace pdconv
