// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Underwater image formation, synthetic fish scenes and spectrum analysis.
//
// Images are 1 x 3 x H x W tensors (RGB) with values in [0, 1].

#ifndef FINSIGHT_UWDEG_HPP_
#define FINSIGHT_UWDEG_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finsight/tensor.hpp"
#include "json.hpp"

namespace finsight::uw {

struct OpticalParams {
  // Attenuation per metre, RGB.
  std::array<double, 3> eta{0.6, 0.20, 0.08};
  // Scene distance in metres; d_map (1 x 1 x H x W) overrides it per pixel.
  double d = 2.0;
  std::optional<Tensor> d_map;
  // Veiling light.
  std::array<double, 3> b_inf{0.05, 0.35, 0.45};
  double fs_sigma = 1.0;
  // Share of the direct signal redistributed by forward scatter.
  double fs_weight = 0.1;
  double noise_sigma = 0.01;

  // ConfigError on negative or out-of-range values.
  void validate() const;
  // e^{-eta_c d} per channel.
  std::array<double, 3> transmission(double distance) const;

  nlohmann::json to_json() const;
  // Missing keys keep their defaults. ConfigError on wrong types.
  static OpticalParams from_json(const nlohmann::json& j);
};

// Separable Gaussian blur with periodic boundary, per plane. sigma = 0 copies.
Tensor gaussian_blur(const Tensor& x, double sigma);

// With D = clean * t and t = e^{-eta d}:
//   out = clamp((1 - a) D + a blur(D) + B (1 - t) + noise, 0, 1)
// where a = fs_weight. `clean` is N x 3 x H x W with values in [0, 1].
Tensor degrade(const Tensor& clean, const OpticalParams& p, std::uint64_t seed);

/// Ring energies of the 2-D DFT. energy[b] = sum |X(k)|^2 / N^2 over the
/// frequencies whose rounded radius is b; radii beyond N/2 fold into the
/// last bin, so the bins sum to sum x^2.
struct RadialSpectrum {
  std::vector<double> energy;
  std::vector<std::size_t> counts;

  std::size_t nyquist() const { return energy.size() - 1; }
  double total() const;
  // Per-ring mean energy.
  std::vector<double> mean() const;
  // First bin of the top third of radii.
  std::size_t high_band_start() const { return 2 * nyquist() / 3 + 1; }
  double high_band_energy() const;
  std::string to_csv() const;
};

// x is 1 x 1 x N x N with N <= 128; GeometryError otherwise.
RadialSpectrum power_spectrum(const Tensor& x);

// Channel c of image n as a 1 x 1 x H x W tensor.
Tensor extract_channel(const Tensor& img, std::size_t c, std::size_t n = 0);

struct SceneBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  int class_id = 0;

  bool operator==(const SceneBox&) const = default;
};

struct SceneSpec {
  std::size_t width = 96;
  std::size_t height = 96;
  std::size_t min_fish = 1;
  std::size_t max_fish = 4;
  // Nose-to-tail length in pixels.
  double min_length = 16.0;
  double max_length = 36.0;
  // Body minor/major axis ratio.
  double min_aspect = 0.3;
  double max_aspect = 0.55;
  // Largest IoU allowed between two fish boxes.
  double max_overlap = 0.1;
  std::size_t max_retries = 200;
  std::uint64_t texture_seed = 1;
  std::uint64_t seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static SceneSpec from_json(const nlohmann::json& j);
};

struct Scene {
  Tensor image;
  std::vector<SceneBox> boxes;
};

// GenerationError if a fish cannot be placed within max_retries draws.
Scene synth_scene(const SceneSpec& spec);

// Binary P6, 8-bit. Values are rounded to the nearest of 256 levels.
std::string encode_ppm(const Tensor& img);
Tensor decode_ppm(std::string_view bytes);
void write_ppm(const std::filesystem::path& path, const Tensor& img);
Tensor read_ppm(const std::filesystem::path& path);
// Rounds to the 8-bit grid so in-memory images match their PPM files.
Tensor quantize8(const Tensor& img);

struct DatasetSpec {
  std::size_t count = 364;
  SceneSpec scene;
  // eta, b_inf and fs_weight come from `optics`; d, fs_sigma and noise are
  // drawn per image from the ranges below.
  OpticalParams optics;
  double d_min = 1.0, d_max = 6.0;
  double fs_sigma_min = 0.5, fs_sigma_max = 1.5;
  double noise_min = 0.0, noise_max = 0.02;
  std::uint64_t seed = 2026;

  void validate() const;
  nlohmann::json to_json() const;
  static DatasetSpec from_json(const nlohmann::json& j);
};

struct SplitCounts {
  std::size_t train = 0, val = 0, test = 0;
};
// 7:1:2 with val = n/10 and test = n/5 (integer division), train the rest.
SplitCounts split_counts(std::size_t n);

struct DatasetItem {
  std::string file;   // relative to the dataset root
  std::string split;  // train | val | test
  Tensor image;       // degraded, 8-bit quantized
  std::vector<SceneBox> boxes;
  OpticalParams optics;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<DatasetItem> items;

  std::vector<const DatasetItem*> split(std::string_view name) const;
};

Dataset generate_dataset(const DatasetSpec& spec);
// Writes images/NNNN.ppm and manifest.json under `root`.
void write_dataset(const Dataset& ds, const std::filesystem::path& root);
// ParseError on a malformed manifest or image.
Dataset read_dataset(const std::filesystem::path& root);
nlohmann::json dataset_manifest(const Dataset& ds);

}  // namespace finsight::uw

#endif  // FINSIGHT_UWDEG_HPP_
