// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "finsight/errors.hpp"
#include "finsight/rng.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::uw {

namespace {

// Salts separating the per-item random streams.
constexpr std::uint64_t kSceneSalt = 0x5CE5E;
constexpr std::uint64_t kTextureSalt = 0x7E27;
constexpr std::uint64_t kOpticsSalt = 0x0971C5;
constexpr std::uint64_t kNoiseSalt = 0x4015E;

class PpmReader {
 public:
  explicit PpmReader(std::string_view bytes) : b_(bytes) {}

  // Skips whitespace and '#' comments, then reads a decimal token.
  std::size_t number() {
    for (;;) {
      while (pos_ < b_.size() && std::isspace(static_cast<unsigned char>(b_[pos_]))) ++pos_;
      if (pos_ < b_.size() && b_[pos_] == '#') {
        while (pos_ < b_.size() && b_[pos_] != '\n') ++pos_;
        continue;
      }
      break;
    }
    std::size_t v = 0, digits = 0;
    while (pos_ < b_.size() && std::isdigit(static_cast<unsigned char>(b_[pos_]))) {
      v = v * 10 + static_cast<std::size_t>(b_[pos_] - '0');
      if (++digits > 9) throw ParseError("ppm: header number too long");
      ++pos_;
    }
    if (digits == 0) throw ParseError("ppm: expected a number in the header");
    return v;
  }
  void magic() {
    if (b_.size() < 2 || b_[0] != 'P' || b_[1] != '6') throw ParseError("ppm: missing P6 magic");
    pos_ = 2;
  }
  void single_whitespace() {
    if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_]))) {
      throw ParseError("ppm: header must end with one whitespace byte");
    }
    ++pos_;
  }
  std::string_view rest() const { return b_.substr(pos_); }

 private:
  std::string_view b_;
  std::size_t pos_ = 0;
};

nlohmann::json box_json(const SceneBox& b) {
  return {{"box", {b.x1, b.y1, b.x2, b.y2}}, {"class", b.class_id}};
}

SceneBox box_from_json(const nlohmann::json& j) {
  const auto& v = j.at("box");
  if (!v.is_array() || v.size() != 4) throw ParseError("manifest: box must have 4 numbers");
  SceneBox b{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>(),
             j.value("class", 0)};
  if (!(b.x1 < b.x2 && b.y1 < b.y2)) throw ParseError("manifest: degenerate box");
  return b;
}

void check_range(double lo, double hi, const char* name) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo >= 0.0 && lo <= hi)) {
    throw ConfigError(std::string("dataset: bad ") + name + " range");
  }
}

}  // namespace

std::string encode_ppm(const Tensor& img) {
  const Shape s = img.shape();
  if (s.n != 1 || s.c != 3) throw DimensionError("ppm: expected 1x3xHxW, got " + s.str());
  std::string out = "P6\n" + std::to_string(s.w) + " " + std::to_string(s.h) + "\n255\n";
  out.reserve(out.size() + 3 * s.h * s.w);
  for (std::size_t y = 0; y < s.h; ++y) {
    for (std::size_t x = 0; x < s.w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = img.at(0, c, y, x);
        if (!(v >= 0.0 && v <= 1.0)) throw ValueError("ppm: values must lie in [0, 1]");
        out.push_back(static_cast<char>(std::lround(v * 255.0)));
      }
    }
  }
  return out;
}

Tensor decode_ppm(std::string_view bytes) {
  PpmReader r(bytes);
  r.magic();
  const std::size_t w = r.number(), h = r.number(), maxval = r.number();
  if (w == 0 || h == 0) throw ParseError("ppm: zero image extent");
  if (maxval == 0 || maxval > 65535) throw ParseError("ppm: maxval out of range");
  r.single_whitespace();
  const std::size_t bpv = maxval > 255 ? 2 : 1;
  const std::string_view data = r.rest();
  if (data.size() < w * h * 3 * bpv) throw ParseError("ppm: truncated pixel data");
  Tensor img(Shape{1, 3, h, w});
  std::size_t i = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        std::size_t v = static_cast<unsigned char>(data[i++]);
        if (bpv == 2) v = (v << 8) | static_cast<unsigned char>(data[i++]);
        if (v > maxval) throw ParseError("ppm: sample exceeds maxval");
        img.at(0, c, y, x) = static_cast<double>(v) / static_cast<double>(maxval);
      }
    }
  }
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& img) {
  const std::string bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError("ppm: cannot open " + path.string() + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ParseError("ppm: write failed for " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ParseError("ppm: cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes);
}

Tensor quantize8(const Tensor& img) {
  Tensor out = img;
  for (double& v : out.data()) v = static_cast<double>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0;
  return out;
}

void DatasetSpec::validate() const {
  if (count == 0) throw ConfigError("dataset: count must be positive");
  scene.validate();
  optics.validate();
  check_range(d_min, d_max, "d");
  check_range(fs_sigma_min, fs_sigma_max, "fs_sigma");
  check_range(noise_min, noise_max, "noise");
}

nlohmann::json DatasetSpec::to_json() const {
  return {{"count", count},
          {"scene", scene.to_json()},
          {"optics", optics.to_json()},
          {"d_range", {d_min, d_max}},
          {"fs_sigma_range", {fs_sigma_min, fs_sigma_max}},
          {"noise_range", {noise_min, noise_max}},
          {"seed", seed}};
}

DatasetSpec DatasetSpec::from_json(const nlohmann::json& j) {
  DatasetSpec s;
  try {
    s.count = j.value("count", s.count);
    if (j.contains("scene")) s.scene = SceneSpec::from_json(j.at("scene"));
    if (j.contains("optics")) s.optics = OpticalParams::from_json(j.at("optics"));
    const auto range = [&](const char* key, double& lo, double& hi) {
      if (!j.contains(key)) return;
      lo = j.at(key).at(0).get<double>();
      hi = j.at(key).at(1).get<double>();
    };
    range("d_range", s.d_min, s.d_max);
    range("fs_sigma_range", s.fs_sigma_min, s.fs_sigma_max);
    range("noise_range", s.noise_min, s.noise_max);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("dataset: ") + e.what());
  }
  return s;
}

SplitCounts split_counts(std::size_t n) {
  SplitCounts c;
  c.val = n / 10;
  c.test = n / 5;
  c.train = n - c.val - c.test;
  return c;
}

std::vector<const DatasetItem*> Dataset::split(std::string_view name) const {
  std::vector<const DatasetItem*> out;
  for (const DatasetItem& it : items) {
    if (it.split == name) out.push_back(&it);
  }
  return out;
}

Dataset generate_dataset(const DatasetSpec& spec) {
  spec.validate();
  Dataset ds;
  ds.spec = spec;
  const SplitCounts sc = split_counts(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) {
    SceneSpec ss = spec.scene;
    ss.seed = derive_seed(spec.seed ^ kSceneSalt, i);
    ss.texture_seed = derive_seed(spec.seed ^ kTextureSalt, i);
    const Scene scene = synth_scene(ss);

    Rng rng(derive_seed(spec.seed ^ kOpticsSalt, i));
    DatasetItem item;
    item.optics = spec.optics;
    item.optics.d = rng.uniform(spec.d_min, spec.d_max);
    item.optics.fs_sigma = rng.uniform(spec.fs_sigma_min, spec.fs_sigma_max);
    item.optics.noise_sigma = rng.uniform(spec.noise_min, spec.noise_max);
    item.image = quantize8(degrade(scene.image, item.optics,
                                   derive_seed(spec.seed ^ kNoiseSalt, i)));
    item.boxes = scene.boxes;
    char name[32];
    std::snprintf(name, sizeof name, "images/%04zu.ppm", i);
    item.file = name;
    item.split = i < sc.train ? "train" : i < sc.train + sc.val ? "val" : "test";
    ds.items.push_back(std::move(item));
  }
  return ds;
}

nlohmann::json dataset_manifest(const Dataset& ds) {
  nlohmann::json items = nlohmann::json::array();
  for (const DatasetItem& it : ds.items) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const SceneBox& b : it.boxes) boxes.push_back(box_json(b));
    items.push_back({{"file", it.file},
                     {"split", it.split},
                     {"width", it.image.shape().w},
                     {"height", it.image.shape().h},
                     {"boxes", boxes},
                     {"optics", it.optics.to_json()}});
  }
  return {{"format", "finsight-dataset"},
          {"version", 1},
          {"classes", {"fish"}},
          {"spec", ds.spec.to_json()},
          {"items", items}};
}

void write_dataset(const Dataset& ds, const std::filesystem::path& root) {
  std::filesystem::create_directories(root / "images");
  for (const DatasetItem& it : ds.items) write_ppm(root / it.file, it.image);
  std::ofstream f(root / "manifest.json");
  if (!f) throw ParseError("dataset: cannot write manifest under " + root.string());
  f << dataset_manifest(ds).dump(2) << '\n';
}

Dataset read_dataset(const std::filesystem::path& root) {
  std::ifstream f(root / "manifest.json");
  if (!f) throw ParseError("dataset: no manifest.json under " + root.string());
  Dataset ds;
  try {
    const nlohmann::json j = nlohmann::json::parse(f);
    if (j.value("format", "") != "finsight-dataset") {
      throw ParseError("dataset: manifest format tag missing");
    }
    ds.spec = DatasetSpec::from_json(j.value("spec", nlohmann::json::object()));
    for (const auto& e : j.at("items")) {
      DatasetItem it;
      it.file = e.at("file").get<std::string>();
      it.split = e.at("split").get<std::string>();
      if (it.split != "train" && it.split != "val" && it.split != "test") {
        throw ParseError("dataset: unknown split '" + it.split + "'");
      }
      for (const auto& b : e.at("boxes")) it.boxes.push_back(box_from_json(b));
      if (e.contains("optics")) it.optics = OpticalParams::from_json(e.at("optics"));
      it.image = read_ppm(root / it.file);
      ds.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("dataset: ") + e.what());
  }
  return ds;
}

}  // namespace finsight::uw
