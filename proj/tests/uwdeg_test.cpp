// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>

#include "finsight/errors.hpp"
#include "finsight/rng.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::uw {
namespace {

Tensor random_image(std::size_t side, std::uint64_t seed) {
  return Rng(seed).uniform_tensor({1, 3, side, side}, 0.0, 1.0);
}

OpticalParams quiet(double d) {
  OpticalParams p;
  p.d = d;
  p.noise_sigma = 0.0;
  return p;
}

double channel_mean(const Tensor& img, std::size_t c) {
  const Tensor ch = extract_channel(img, c);
  return ch.sum() / static_cast<double>(ch.numel());
}

TEST(Optics, ValidationRejectsNegatives) {
  OpticalParams p;
  EXPECT_NO_THROW(p.validate());
  p.eta[1] = -0.1;
  EXPECT_THROW(p.validate(), ConfigError);
  p = OpticalParams{};
  p.d = -1.0;
  EXPECT_THROW(degrade(random_image(8, 1), p, 0), ConfigError);
  p = OpticalParams{};
  p.b_inf[2] = 1.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = OpticalParams{};
  p.fs_sigma = -0.5;
  EXPECT_THROW(p.validate(), ConfigError);
  p = OpticalParams{};
  p.noise_sigma = -0.01;
  EXPECT_THROW(p.validate(), ConfigError);
}

TEST(Optics, JsonRoundTrip) {
  OpticalParams p;
  p.eta = {0.5, 0.25, 0.125};
  p.d = 3.5;
  p.noise_sigma = 0.02;
  const OpticalParams q = OpticalParams::from_json(p.to_json());
  EXPECT_EQ(q.eta, p.eta);
  EXPECT_EQ(q.d, p.d);
  EXPECT_EQ(q.b_inf, p.b_inf);
  EXPECT_EQ(q.noise_sigma, p.noise_sigma);
  EXPECT_THROW(OpticalParams::from_json({{"eta", {1, 2}}}), ConfigError);
}

TEST(Degrade, ZeroDistanceIsIdentity) {
  const Tensor clean = random_image(16, 2);
  OpticalParams p = quiet(0.0);
  p.fs_weight = 0.0;
  EXPECT_TRUE(bitwise_equal(degrade(clean, p, 7), clean));
}

TEST(Degrade, FarFieldConvergesToVeilingLight) {
  const Tensor clean = random_image(16, 3);
  OpticalParams p = quiet(50.0);
  p.eta = {0.6, 0.6, 0.6};
  Tensor out = degrade(clean, p, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor ch = extract_channel(out, c);
    for (double v : ch.data()) EXPECT_NEAR(v, p.b_inf[c], 1e-6);
  }
  // Default eta needs a longer path for the blue channel.
  out = degrade(clean, quiet(1e3), 1);
  for (std::size_t c = 0; c < 3; ++c) {
    const Tensor ch = extract_channel(out, c);
    for (double v : ch.data()) EXPECT_NEAR(v, OpticalParams{}.b_inf[c], 1e-6);
  }
}

TEST(Degrade, DirectScaleFactors) {
  OpticalParams p = quiet(2.0);
  p.eta = {0.6, 0.2, 0.1};
  p.b_inf = {0.0, 0.0, 0.0};
  p.fs_weight = 0.0;
  const Tensor out = degrade(Tensor({1, 3, 4, 4}, 1.0), p, 0);
  EXPECT_DOUBLE_EQ(out.at(0, 0, 1, 2), std::exp(-1.2));
  EXPECT_DOUBLE_EQ(out.at(0, 1, 3, 0), std::exp(-0.4));
  EXPECT_DOUBLE_EQ(out.at(0, 2, 0, 0), std::exp(-0.2));
}

TEST(Degrade, TransmissionMonotoneAndOrdered) {
  const OpticalParams p;
  std::array<double, 3> prev{1.0, 1.0, 1.0};
  for (int i = 1; i <= 200; ++i) {
    const double d = 0.05 * i;
    const auto t = p.transmission(d);
    for (std::size_t c = 0; c < 3; ++c) EXPECT_LE(t[c], prev[c]);
    EXPECT_LE(t[0], t[1]);
    EXPECT_LE(t[1], t[2]);
    prev = t;
  }
}

TEST(Degrade, MeanDirectTransmissionOrdered) {
  // White target, black veil: channel means are the mean transmissions.
  OpticalParams p = quiet(0.0);
  p.b_inf = {0.0, 0.0, 0.0};
  const Tensor white({1, 3, 8, 8}, 1.0);
  double prev_red = 1.0;
  for (double d : {0.1, 0.5, 1.0, 3.0, 10.0}) {
    p.d = d;
    const Tensor out = degrade(white, p, 0);
    const double r = channel_mean(out, 0), g = channel_mean(out, 1), b = channel_mean(out, 2);
    EXPECT_LE(r, g);
    EXPECT_LE(g, b);
    EXPECT_LE(r, prev_red);
    prev_red = r;
  }
}

TEST(Degrade, DeterministicPerSeed) {
  const Tensor clean = random_image(12, 4);
  const OpticalParams p;
  EXPECT_TRUE(bitwise_equal(degrade(clean, p, 11), degrade(clean, p, 11)));
  EXPECT_FALSE(bitwise_equal(degrade(clean, p, 11), degrade(clean, p, 12)));
}

TEST(Degrade, ConstantMapMatchesScalar) {
  const Tensor clean = random_image(10, 5);
  OpticalParams scalar = quiet(2.5);
  OpticalParams mapped = scalar;
  mapped.d_map = Tensor({1, 1, 10, 10}, 2.5);
  EXPECT_TRUE(bitwise_equal(degrade(clean, scalar, 0), degrade(clean, mapped, 0)));
  mapped.d_map = Tensor({1, 1, 9, 10}, 2.5);
  EXPECT_THROW(degrade(clean, mapped, 0), DimensionError);
}

TEST(Degrade, InputContract) {
  EXPECT_THROW(degrade(Tensor({1, 1, 4, 4}, 0.5), OpticalParams{}, 0), DimensionError);
  EXPECT_THROW(degrade(Tensor({1, 3, 4, 4}, 1.5), OpticalParams{}, 0), ValueError);
}

TEST(Blur, ConservesMassAndConstants) {
  const Tensor x = random_image(16, 6);
  const Tensor b = gaussian_blur(x, 1.3);
  EXPECT_NEAR(b.sum(), x.sum(), 1e-10);
  const Tensor flat = gaussian_blur(Tensor({1, 1, 5, 7}, 0.4), 2.0);
  for (double v : flat.data()) EXPECT_NEAR(v, 0.4, 1e-15);
  EXPECT_TRUE(bitwise_equal(gaussian_blur(x, 0.0), x));
}

TEST(Spectrum, ConstantImageIsAllDc) {
  const RadialSpectrum s = power_spectrum(Tensor({1, 1, 16, 16}, 0.3));
  EXPECT_NEAR(s.energy[0], 16 * 16 * 0.09, 1e-12);
  for (std::size_t b = 1; b < s.energy.size(); ++b) EXPECT_LT(s.energy[b], 1e-20);
}

TEST(Spectrum, CheckerboardIsAllNyquist) {
  Tensor x({1, 1, 32, 32});
  for (std::size_t y = 0; y < 32; ++y) {
    for (std::size_t c = 0; c < 32; ++c) x.at(0, 0, y, c) = (y + c) % 2 == 0 ? 1.0 : -1.0;
  }
  const RadialSpectrum s = power_spectrum(x);
  EXPECT_EQ(s.nyquist(), 16u);
  EXPECT_NEAR(s.energy[16], 1024.0, 1e-9);
  for (std::size_t b = 0; b < 16; ++b) EXPECT_LT(s.energy[b], 1e-18);
}

TEST(Spectrum, CosineLandsInItsRing) {
  // cos(2 pi 5 x / N) has energy N^2/2 at horizontal frequencies +-5.
  const std::size_t n = 40;
  Tensor x({1, 1, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t c = 0; c < n; ++c) {
      x.at(0, 0, y, c) = std::cos(2.0 * std::numbers::pi * 5.0 * static_cast<double>(c) / n);
    }
  }
  const RadialSpectrum s = power_spectrum(x);
  EXPECT_NEAR(s.energy[5], n * n / 2.0, 1e-9);
  EXPECT_NEAR(s.total(), s.energy[5], 1e-9);
}

TEST(Spectrum, Parseval) {
  for (std::size_t n : {7u, 33u, 64u, 128u}) {
    const Tensor x = Rng(n).uniform_tensor({1, 1, n, n}, -1.0, 1.0);
    double spatial = 0.0;
    for (double v : x.data()) spatial += v * v;
    const RadialSpectrum s = power_spectrum(x);
    EXPECT_LE(std::abs(s.total() - spatial) / spatial, 1e-6) << n;
    std::size_t cells = 0;
    for (std::size_t c : s.counts) cells += c;
    EXPECT_EQ(cells, n * n);
  }
}

TEST(Spectrum, GeometryErrors) {
  EXPECT_THROW(power_spectrum(Tensor({1, 1, 8, 9})), GeometryError);
  EXPECT_THROW(power_spectrum(Tensor({1, 1, 130, 130})), GeometryError);
  EXPECT_THROW(power_spectrum(Tensor({1, 3, 8, 8})), DimensionError);
}

TEST(Spectrum, BlurLowersHighBand) {
  const Tensor x = extract_channel(random_image(48, 8), 0);
  const double before = power_spectrum(x).high_band_energy();
  const double after = power_spectrum(gaussian_blur(x, 1.0)).high_band_energy();
  EXPECT_LT(after, before);
  EXPECT_EQ(power_spectrum(x).high_band_start(), 17u);
}

TEST(Spectrum, CsvLayout) {
  const std::string csv = power_spectrum(Tensor({1, 1, 4, 4}, 1.0)).to_csv();
  EXPECT_EQ(csv.rfind("bin,energy\n0,16\n1,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}

// Property: with noise off, every channel's high band drops for d > 0,
// including short paths where transmission is close to 1.
TEST(Degrade, HighBandEnergyDecays) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SceneSpec spec;
    spec.width = spec.height = 64;
    spec.seed = seed;
    spec.texture_seed = seed + 100;
    const Tensor clean = synth_scene(spec).image;
    for (double d : {0.01, 0.5, 2.0, 8.0}) {
      for (double sigma : {0.3, 1.0, 2.0}) {
        OpticalParams p = quiet(d);
        p.fs_sigma = sigma;
        const Tensor out = degrade(clean, p, seed);
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_LT(power_spectrum(extract_channel(out, c)).high_band_energy(),
                    power_spectrum(extract_channel(clean, c)).high_band_energy())
              << "seed " << seed << " d " << d << " sigma " << sigma << " c " << c;
        }
      }
    }
  }
}

TEST(Scene, DeterministicPerSeed) {
  SceneSpec spec;
  spec.seed = 42;
  const Scene a = synth_scene(spec), b = synth_scene(spec);
  EXPECT_TRUE(bitwise_equal(a.image, b.image));
  EXPECT_EQ(a.boxes, b.boxes);
  spec.seed = 43;
  EXPECT_FALSE(bitwise_equal(synth_scene(spec).image, a.image));
}

TEST(Scene, ExactCountAndBounds) {
  SceneSpec spec;
  spec.min_fish = spec.max_fish = 3;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const Scene s = synth_scene(spec);
    ASSERT_EQ(s.boxes.size(), 3u);
    for (const SceneBox& b : s.boxes) {
      EXPECT_LE(0.0, b.x1);
      EXPECT_LT(b.x1, b.x2);
      EXPECT_LE(b.x2, 96.0);
      EXPECT_LE(0.0, b.y1);
      EXPECT_LT(b.y1, b.y2);
      EXPECT_LE(b.y2, 96.0);
    }
    for (double v : s.image.data()) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
  }
}

TEST(Scene, BoxesAreTight) {
  // Diff against the fish-free background: changed pixels fill the box edges.
  SceneSpec spec;
  spec.min_fish = spec.max_fish = 1;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    spec.seed = seed;
    const Scene s = synth_scene(spec);
    SceneSpec empty = spec;
    empty.min_fish = empty.max_fish = 0;
    const Tensor bg = synth_scene(empty).image;
    const SceneBox& b = s.boxes.at(0);
    double x1 = 1e9, y1 = 1e9, x2 = -1, y2 = -1;
    for (std::size_t y = 0; y < 96; ++y) {
      for (std::size_t x = 0; x < 96; ++x) {
        bool changed = false;
        for (std::size_t c = 0; c < 3; ++c) changed |= s.image.at(0, c, y, x) != bg.at(0, c, y, x);
        if (!changed) continue;
        x1 = std::min(x1, double(x));
        y1 = std::min(y1, double(y));
        x2 = std::max(x2, double(x + 1));
        y2 = std::max(y2, double(y + 1));
      }
    }
    EXPECT_EQ((SceneBox{x1, y1, x2, y2, 0}), b) << "seed " << seed;
  }
}

TEST(Scene, InfeasiblePlacementFails) {
  SceneSpec spec;
  spec.min_length = spec.max_length = 90.0;
  EXPECT_THROW(synth_scene(spec), GenerationError);
  spec = SceneSpec{};
  spec.min_fish = spec.max_fish = 40;
  spec.max_overlap = 0.0;
  spec.max_retries = 20;
  EXPECT_THROW(synth_scene(spec), GenerationError);
}

TEST(Scene, ConfigErrors) {
  SceneSpec spec;
  spec.min_fish = 5;
  spec.max_fish = 2;
  EXPECT_THROW(synth_scene(spec), ConfigError);
  spec = SceneSpec{};
  spec.min_aspect = 0.0;
  EXPECT_THROW(synth_scene(spec), ConfigError);
}

TEST(Ppm, RoundTripOnEightBitGrid) {
  const Tensor img = quantize8(random_image(9, 10));
  const std::string bytes = encode_ppm(img);
  EXPECT_EQ(bytes.substr(0, 11), "P6\n9 9\n255\n");
  EXPECT_TRUE(bitwise_equal(decode_ppm(bytes), img));
  EXPECT_TRUE(bitwise_equal(quantize8(img), img));
}

TEST(Ppm, HeaderCommentsAndWideSamples) {
  std::string bytes = "P6 # comment\n1 1\n# another\n65535\n";
  bytes += std::string("\xff\xff\x00\x00\x80\x00", 6);
  const Tensor img = decode_ppm(bytes);
  EXPECT_EQ(img.at(0, 0, 0, 0), 1.0);
  EXPECT_EQ(img.at(0, 1, 0, 0), 0.0);
  EXPECT_EQ(img.at(0, 2, 0, 0), 32768.0 / 65535.0);
}

TEST(Ppm, MalformedInputs) {
  EXPECT_THROW(decode_ppm("P5\n1 1\n255\nabc"), ParseError);
  EXPECT_THROW(decode_ppm("P6\n2 2\n255\nabc"), ParseError);
  EXPECT_THROW(decode_ppm("P6\n1 1\n0\nabc"), ParseError);
  EXPECT_THROW(decode_ppm("P6\n1 x\n255\nabc"), ParseError);
  EXPECT_THROW(decode_ppm("P6\n1 1\n255"), ParseError);
  EXPECT_THROW(decode_ppm(std::string("P6\n1 1\n7\n\x08\x00\x00", 13)), ParseError);
  EXPECT_THROW(read_ppm("/nonexistent/file.ppm"), ParseError);
}

TEST(Dataset, SplitCounts) {
  const SplitCounts c = split_counts(364);
  EXPECT_EQ(c.train, 256u);
  EXPECT_EQ(c.val, 36u);
  EXPECT_EQ(c.test, 72u);
}

TEST(Dataset, GenerateWriteReadRoundTrip) {
  DatasetSpec spec;
  spec.count = 10;
  spec.scene.width = spec.scene.height = 48;
  spec.scene.min_length = 10;
  spec.scene.max_length = 18;
  const Dataset ds = generate_dataset(spec);
  ASSERT_EQ(ds.items.size(), 10u);
  EXPECT_EQ(ds.split("train").size(), 7u);
  EXPECT_EQ(ds.split("val").size(), 1u);
  EXPECT_EQ(ds.split("test").size(), 2u);

  const auto root = std::filesystem::temp_directory_path() / "finsight_uwdeg_test";
  std::filesystem::remove_all(root);
  write_dataset(ds, root);
  const Dataset back = read_dataset(root);
  ASSERT_EQ(back.items.size(), ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    EXPECT_EQ(back.items[i].boxes, ds.items[i].boxes);
    EXPECT_EQ(back.items[i].split, ds.items[i].split);
    EXPECT_TRUE(bitwise_equal(back.items[i].image, ds.items[i].image));
    EXPECT_EQ(back.items[i].optics.d, ds.items[i].optics.d);
  }
  EXPECT_EQ(dataset_manifest(back), dataset_manifest(ds));
  std::filesystem::remove_all(root);

  const Dataset again = generate_dataset(spec);
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    EXPECT_TRUE(bitwise_equal(again.items[i].image, ds.items[i].image));
  }
}

TEST(Dataset, MissingManifest) {
  EXPECT_THROW(read_dataset("/nonexistent/dataset"), ParseError);
}

}  // namespace
}  // namespace finsight::uw
