// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "finsight/errors.hpp"
#include "finsight/rng.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::uw {

namespace {

void require_nonneg(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) {
    throw ConfigError(std::string("optics: ") + name + " must be finite and >= 0, got " +
                      std::to_string(v));
  }
}

std::array<double, 3> triple(const nlohmann::json& j, const char* key,
                             std::array<double, 3> fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) {
    throw ConfigError(std::string("optics: ") + key + " must be a 3-element array");
  }
  return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

std::vector<double> gaussian_taps(double sigma) {
  const auto radius = static_cast<std::size_t>(std::ceil(3.0 * sigma));
  std::vector<double> taps(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    const double u = static_cast<double>(i) - static_cast<double>(radius);
    taps[i] = std::exp(-0.5 * u * u / (sigma * sigma));
    total += taps[i];
  }
  for (double& t : taps) t /= total;
  return taps;
}

}  // namespace

void OpticalParams::validate() const {
  for (double e : eta) require_nonneg(e, "eta");
  for (double b : b_inf) {
    if (!std::isfinite(b) || b < 0.0 || b > 1.0) {
      throw ConfigError("optics: b_inf values must lie in [0, 1]");
    }
  }
  require_nonneg(d, "d");
  require_nonneg(fs_sigma, "fs_sigma");
  require_nonneg(noise_sigma, "noise_sigma");
  if (!std::isfinite(fs_weight) || fs_weight < 0.0 || fs_weight > 1.0) {
    throw ConfigError("optics: fs_weight must lie in [0, 1]");
  }
  if (d_map) {
    if (d_map->shape().c != 1) throw ConfigError("optics: d_map must have one channel");
    for (double v : d_map->data()) require_nonneg(v, "d_map");
  }
}

std::array<double, 3> OpticalParams::transmission(double distance) const {
  return {std::exp(-eta[0] * distance), std::exp(-eta[1] * distance),
          std::exp(-eta[2] * distance)};
}

nlohmann::json OpticalParams::to_json() const {
  nlohmann::json j = {{"eta", eta},           {"d", d},
                      {"b_inf", b_inf},       {"fs_sigma", fs_sigma},
                      {"fs_weight", fs_weight}, {"noise_sigma", noise_sigma}};
  if (d_map) j["d_map"] = "per-pixel";
  return j;
}

OpticalParams OpticalParams::from_json(const nlohmann::json& j) {
  OpticalParams p;
  try {
    p.eta = triple(j, "eta", p.eta);
    p.b_inf = triple(j, "b_inf", p.b_inf);
    p.d = j.value("d", p.d);
    p.fs_sigma = j.value("fs_sigma", p.fs_sigma);
    p.fs_weight = j.value("fs_weight", p.fs_weight);
    p.noise_sigma = j.value("noise_sigma", p.noise_sigma);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("optics: ") + e.what());
  }
  return p;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  if (!std::isfinite(sigma) || sigma < 0.0) {
    throw ValueError("gaussian_blur: sigma must be finite and >= 0");
  }
  if (sigma == 0.0) return x;
  const std::vector<double> taps = gaussian_taps(sigma);
  const auto radius = static_cast<std::ptrdiff_t>(taps.size() / 2);
  const Shape s = x.shape();
  const auto h = static_cast<std::ptrdiff_t>(s.h), w = static_cast<std::ptrdiff_t>(s.w);
  const auto wrap = [](std::ptrdiff_t i, std::ptrdiff_t n) { return ((i % n) + n) % n; };
  Tensor tmp(s), out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            acc += taps[static_cast<std::size_t>(k + radius)] *
                   x.at(n, c, static_cast<std::size_t>(y),
                        static_cast<std::size_t>(wrap(xx + k, w)));
          }
          tmp.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) = acc;
        }
      }
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t xx = 0; xx < w; ++xx) {
          double acc = 0.0;
          for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
            acc += taps[static_cast<std::size_t>(k + radius)] *
                   tmp.at(n, c, static_cast<std::size_t>(wrap(y + k, h)),
                          static_cast<std::size_t>(xx));
          }
          out.at(n, c, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) = acc;
        }
      }
    }
  }
  return out;
}

Tensor degrade(const Tensor& clean, const OpticalParams& p, std::uint64_t seed) {
  p.validate();
  const Shape s = clean.shape();
  if (s.c != 3) throw DimensionError("degrade: expected 3 channels, got " + s.str());
  for (double v : clean.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValueError("degrade: clean values must lie in [0, 1]");
  }
  if (p.d_map && (p.d_map->shape().h != s.h || p.d_map->shape().w != s.w)) {
    throw DimensionError("degrade: d_map " + p.d_map->shape().str() + " vs image " + s.str());
  }

  // Transmission per channel and pixel.
  Tensor t(Shape{1, 3, s.h, s.w});
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < s.h; ++y) {
      for (std::size_t x = 0; x < s.w; ++x) {
        const double d = p.d_map ? p.d_map->at(0, 0, y, x) : p.d;
        t.at(0, c, y, x) = std::exp(-p.eta[c] * d);
      }
    }
  }
  Tensor direct(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          direct.at(n, c, y, x) = clean.at(n, c, y, x) * t.at(0, c, y, x);
        }
      }
    }
  }
  const Tensor scattered = gaussian_blur(direct, p.fs_sigma);

  Rng rng(seed);
  const double a = p.fs_weight;
  Tensor out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          const double tr = t.at(0, c, y, x);
          double v = (1.0 - a) * direct.at(n, c, y, x) + a * scattered.at(n, c, y, x) +
                     p.b_inf[c] * (1.0 - tr);
          if (p.noise_sigma > 0.0) v += p.noise_sigma * rng.normal();
          out.at(n, c, y, x) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
  }
  return out;
}

}  // namespace finsight::uw
