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

#include "pdconv/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "pdconv/errors.hpp"
#include "pdconv/io.hpp"
#include "pdconv/random.hpp"

namespace pdconv {
namespace {

constexpr int kWall = 0;
constexpr int kBed = 1;
constexpr int kPillow = 2;
constexpr int kPoster = 3;
constexpr int kFirstGeneric = 4;
constexpr int kMinPixels = 12;
// Pillow area floor; keeps the noisy pillow and bed RGB means close.
constexpr double kMinPillowFraction = 0.045;
constexpr int kMaxAttempts = 64;
constexpr double kColorJitter = 0.03;

constexpr std::array<std::array<double, 3>, kMaxClasses> kPalette = {{
    {0.75, 0.72, 0.65},  // wall
    {0.35, 0.45, 0.70},  // bed
    {0.35, 0.45, 0.70},  // pillow, same as bed
    {0.70, 0.30, 0.30},  // poster
    {0.30, 0.65, 0.35},
    {0.75, 0.70, 0.25},
    {0.25, 0.25, 0.30},
    {0.60, 0.35, 0.70},
    {0.25, 0.60, 0.65},
    {0.80, 0.50, 0.25},
}};

struct Canvas {
  int h;
  int w;
  std::vector<std::int32_t> label;
  std::vector<double> depth;

  std::size_t at(int y, int x) const { return static_cast<std::size_t>(y * w + x); }
};

struct Rect {
  int top;
  int left;
  int height;
  int width;
  bool ellipse;

  bool covers(int y, int x) const {
    if (y < top || y >= top + height || x < left || x >= left + width) return false;
    if (!ellipse) return true;
    const double cy = top + (height - 1) / 2.0;
    const double cx = left + (width - 1) / 2.0;
    const double ry = height / 2.0;
    const double rx = width / 2.0;
    const double dy = (y - cy) / ry;
    const double dx = (x - cx) / rx;
    return dy * dy + dx * dx <= 1.0;
  }
};

int rand_between(Rng& rng, int lo, int hi) {
  if (hi < lo) hi = lo;
  return static_cast<int>(rng.uniform_int(lo, hi));
}

// Paints a region with a class and a depth plane d + gy * (y - cy) + gx * (x - cx).
void paint(Canvas& cv, const Rect& r, int cls, double d, double gy, double gx) {
  const double cy = r.top + r.height / 2.0;
  const double cx = r.left + r.width / 2.0;
  for (int y = std::max(0, r.top); y < std::min(cv.h, r.top + r.height); ++y) {
    for (int x = std::max(0, r.left); x < std::min(cv.w, r.left + r.width); ++x) {
      if (!r.covers(y, x)) continue;
      cv.label[cv.at(y, x)] = cls;
      cv.depth[cv.at(y, x)] = d + gy * (y - cy) + gx * (x - cx);
    }
  }
}

bool try_build(Rng& rng, const GenConfig& cfg, Canvas& cv, std::vector<std::array<double, 3>>& colors) {
  const int H = cfg.height;
  const int W = cfg.width;
  const int M = cfg.num_classes;
  cv = Canvas{H, W, std::vector<std::int32_t>(static_cast<std::size_t>(H * W), kWall),
              std::vector<double>(static_cast<std::size_t>(H * W))};

  colors.assign(static_cast<std::size_t>(M), {});
  for (int c = 0; c < M; ++c) {
    for (int k = 0; k < 3; ++k) {
      const double v = kPalette[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] +
                       rng.uniform(-kColorJitter, kColorJitter);
      colors[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] = std::clamp(v, 0.2, 0.8);
    }
  }
  colors[kPillow] = colors[kBed];

  // Wall plane, slightly tilted; stays inside [0.71, 0.89].
  const double wall_d = rng.uniform(0.75, 0.85);
  const double wall_gy = rng.uniform(-0.04, 0.04) / H;
  const double wall_gx = rng.uniform(-0.04, 0.04) / W;
  auto wall_depth = [&](int y, int x) { return wall_d + wall_gy * (y - H / 2.0) + wall_gx * (x - W / 2.0); };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) cv.depth[cv.at(y, x)] = wall_depth(y, x);
  }

  if (M > kPoster) {
    // Poster: on the wall plane, upper half.
    const int ph = rand_between(rng, H / 6, H / 3);
    const int pw = rand_between(rng, W / 6, W / 3);
    const int top = rand_between(rng, 1, std::max(1, H / 2 - ph));
    const int left = rand_between(rng, 1, W - pw - 1);
    Rect r{top, left, ph, pw, false};
    for (int y = top; y < top + ph; ++y) {
      for (int x = left; x < left + pw; ++x) {
        if (r.covers(y, x)) cv.label[cv.at(y, x)] = kPoster;
      }
    }
  }

  if (M > kFirstGeneric) {
    const int count = rand_between(rng, cfg.min_objects, cfg.max_objects);
    for (int i = 0; i < count; ++i) {
      const int cls = rand_between(rng, kFirstGeneric, M - 1);
      const int oh = rand_between(rng, H / 8, H / 4);
      const int ow = rand_between(rng, W / 8, W / 4);
      Rect r{rand_between(rng, 0, H - oh), rand_between(rng, 0, W - ow), oh, ow, rng.uniform() < 0.5};
      paint(cv, r, cls, rng.uniform(0.3, 0.7), 0.0, 0.0);
    }
  }

  // Bed: lower part of the image, in front of the wall (or in its plane when
  // it must serve as the color-only partner of the wall).
  const int bh = rand_between(rng, static_cast<int>(0.30 * H), static_cast<int>(0.45 * H));
  const int bw = rand_between(rng, static_cast<int>(0.45 * W), static_cast<int>(0.75 * W));
  const Rect bed{H - bh - rand_between(rng, 0, H / 10), rand_between(rng, 0, W - bw), bh, bw, false};
  const double bed_d = M > kPoster ? wall_d - rng.uniform(0.20, 0.30) : wall_d;
  const double bed_gy = M > kPoster ? rng.uniform(-0.03, 0.03) / H : wall_gy;
  const double bed_gx = M > kPoster ? rng.uniform(-0.03, 0.03) / W : wall_gx;
  if (M > kPoster) {
    paint(cv, bed, kBed, bed_d, bed_gy, bed_gx);
  } else {
    for (int y = bed.top; y < bed.top + bed.height; ++y) {
      for (int x = bed.left; x < bed.left + bed.width; ++x) cv.label[cv.at(y, x)] = kBed;
    }
  }

  // Pillows: inside the bed, same color, strictly closer.
  const int pillows = rand_between(rng, 1, 2);
  for (int i = 0; i < pillows; ++i) {
    const int ph = std::max(3, rand_between(rng, static_cast<int>(0.40 * bh), static_cast<int>(0.60 * bh)));
    const int pw = std::max(3, rand_between(rng, static_cast<int>(0.30 * bw), static_cast<int>(0.45 * bw)));
    Rect r{bed.top + rand_between(rng, 1, bh - ph - 1), bed.left + rand_between(rng, 1, bw - pw - 1), ph, pw,
           rng.uniform() < 0.5};
    paint(cv, r, kPillow, bed_d - rng.uniform(kPillowGap, kPillowGap + 0.07), bed_gy, bed_gx);
  }

  std::vector<int> hist(static_cast<std::size_t>(M), 0);
  for (auto l : cv.label) ++hist[static_cast<std::size_t>(l)];
  for (int c = 0; c < std::min(M, kFirstGeneric); ++c) {
    if (hist[static_cast<std::size_t>(c)] < kMinPixels) return false;
  }
  if (hist[kPillow] < kMinPillowFraction * H * W) return false;
  return true;
}

std::string scene_name(std::size_t i, const char* kind) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "scene_%05zu.%s.pdt", i, kind);
  return buf;
}

}  // namespace

void GenConfig::validate() const {
  if (height < 16 || width < 16) throw ConfigError("scene size must be at least 16x16");
  if (height > 4096 || width > 4096) throw ConfigError("scene size must be at most 4096x4096");
  if (num_classes < 3 || num_classes > kMaxClasses) {
    throw ConfigError("num_classes must be in [3, " + std::to_string(kMaxClasses) + "]");
  }
  if (min_objects < 0 || max_objects < min_objects || max_objects > 16) {
    throw ConfigError("object count range must satisfy 0 <= min_objects <= max_objects <= 16");
  }
  if (num_classes > kFirstGeneric && max_objects == 0) {
    throw ConfigError("classes >= 4 need max_objects >= 1 to appear");
  }
  if (!(rgb_noise >= 0.0 && rgb_noise <= 0.2) || !(depth_noise >= 0.0 && depth_noise <= 0.2)) {
    throw ConfigError("noise levels must be in [0, 0.2]");
  }
}

void SegSample::validate(int num_classes) const {
  if (rgb.n() != 1 || rgb.c() != 3) throw DimensionError("rgb must be (1, 3, H, W), got " + rgb.shape().str());
  if (depth.n() != 1 || depth.c() != 1) throw DimensionError("depth must be (1, 1, H, W), got " + depth.shape().str());
  if (depth.h() != rgb.h()) throw DimensionError("depth height differs from rgb");
  if (depth.w() != rgb.w()) throw DimensionError("depth width differs from rgb");
  if (static_cast<std::int64_t>(labels.size()) != rgb.h() * rgb.w()) throw DimensionError("label count differs from H*W");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw DataError("label " + std::to_string(labels[i]) + " out of range at pixel (" +
                      std::to_string(static_cast<std::int64_t>(i) / rgb.w()) + ", " +
                      std::to_string(static_cast<std::int64_t>(i) % rgb.w()) + ")");
    }
  }
}

std::array<double, 3> class_color(int cls) {
  if (cls < 0 || cls >= kMaxClasses) throw DataError("class out of range");
  return kPalette[static_cast<std::size_t>(cls)];
}

SegSample gen_scene(std::uint64_t seed, const GenConfig& cfg) {
  cfg.validate();
  Rng rng(seed);
  Canvas cv;
  std::vector<std::array<double, 3>> colors;
  bool ok = false;
  for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) ok = try_build(rng, cfg, cv, colors);
  if (!ok) throw ConfigError("could not place every class in a " + std::to_string(cfg.height) + "x" +
                             std::to_string(cfg.width) + " scene");

  const int H = cfg.height;
  const int W = cfg.width;
  SegSample s{Tensor<float>(Shape{1, 3, H, W}), Tensor<float>(Shape{1, 1, H, W}), cv.label};
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const double base = colors[static_cast<std::size_t>(cv.label[cv.at(y, x)])][static_cast<std::size_t>(c)];
        s.rgb(0, c, y, x) = static_cast<float>(std::clamp(base + cfg.rgb_noise * rng.normal(), 0.0, 1.0));
      }
    }
  }
  std::vector<double> d(cv.depth);
  for (auto& v : d) v += cfg.depth_noise * rng.normal();
  const auto [lo, hi] = std::minmax_element(d.begin(), d.end());
  const double dmin = *lo;
  const double range = std::max(*hi - dmin, 1e-12);
  for (std::size_t i = 0; i < d.size(); ++i) s.depth[static_cast<std::int64_t>(i)] = static_cast<float>((d[i] - dmin) / range);
  return s;
}

Dataset generate_dataset(std::uint64_t seed, int count, const GenConfig& cfg) {
  if (count < 1) throw ConfigError("sample count must be positive");
  cfg.validate();
  Dataset data{cfg.num_classes, cfg.height, cfg.width, seed, {}};
  data.samples.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) data.samples.push_back(gen_scene(derive_seed(seed, static_cast<std::uint64_t>(i)), cfg));
  return data;
}

void write_dataset(const std::filesystem::path& dir, const Dataset& data) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  const auto H = static_cast<std::uint32_t>(data.height);
  const auto W = static_cast<std::uint32_t>(data.width);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const auto& s = data.samples[i];
    write_pdt(dir / scene_name(i, "rgb"), to_raw<float>(s.rgb.data(), {3, H, W}));
    write_pdt(dir / scene_name(i, "depth"), to_raw<float>(s.depth.data(), {1, H, W}));
    write_pdt(dir / scene_name(i, "label"), to_raw<std::int32_t>(s.labels, {H, W}));
  }
  nlohmann::ordered_json manifest = {{"version", 1},
                                     {"M", data.num_classes},
                                     {"H", data.height},
                                     {"W", data.width},
                                     {"count", data.samples.size()},
                                     {"seed", data.seed}};
  write_text_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  const auto bytes = read_file(manifest_path);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  Dataset data;
  std::int64_t count = 0;
  try {
    if (m.at("version").get<int>() != 1) throw FormatError(manifest_path.string() + ": unsupported version");
    data.num_classes = m.at("M").get<int>();
    data.height = m.at("H").get<int>();
    data.width = m.at("W").get<int>();
    count = m.at("count").get<std::int64_t>();
    data.seed = m.at("seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (data.num_classes < 2 || data.height < 1 || data.width < 1 || count < 1) {
    throw FormatError(manifest_path.string() + ": invalid M, H, W or count");
  }
  const auto H = static_cast<std::uint32_t>(data.height);
  const auto W = static_cast<std::uint32_t>(data.width);
  auto expect_dims = [&](const RawArray& raw, std::vector<std::uint32_t> dims, const std::filesystem::path& p) {
    if (raw.dims != dims) throw FormatError(p.string() + ": unexpected dims");
  };
  for (std::int64_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto prgb = dir / scene_name(idx, "rgb");
    const auto pdep = dir / scene_name(idx, "depth");
    const auto plab = dir / scene_name(idx, "label");
    const auto rgb = read_pdt(prgb);
    const auto dep = read_pdt(pdep);
    const auto lab = read_pdt(plab);
    expect_dims(rgb, {3, H, W}, prgb);
    expect_dims(dep, {1, H, W}, pdep);
    expect_dims(lab, {H, W}, plab);
    SegSample s{Tensor<float>(Shape{1, 3, data.height, data.width}, raw_values<float>(rgb)),
                Tensor<float>(Shape{1, 1, data.height, data.width}, raw_values<float>(dep)),
                raw_values<std::int32_t>(lab)};
    s.validate(data.num_classes);
    data.samples.push_back(std::move(s));
  }
  return data;
}

Batch make_batch(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractError("empty batch");
  const auto N = static_cast<std::int64_t>(indices.size());
  const std::int64_t H = data.height;
  const std::int64_t W = data.width;
  Batch b{Tensor<float>(Shape{N, 3, H, W}), Tensor<float>(Shape{N, 1, H, W}), {}};
  b.labels.reserve(static_cast<std::size_t>(N * H * W));
  for (std::int64_t n = 0; n < N; ++n) {
    const auto& s = data.samples.at(indices[static_cast<std::size_t>(n)]);
    std::copy(s.rgb.data().begin(), s.rgb.data().end(), b.rgb.ptr() + n * 3 * H * W);
    std::copy(s.depth.data().begin(), s.depth.data().end(), b.depth.ptr() + n * H * W);
    b.labels.insert(b.labels.end(), s.labels.begin(), s.labels.end());
  }
  return b;
}

}  // namespace pdconv
