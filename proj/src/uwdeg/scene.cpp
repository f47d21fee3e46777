// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <numbers>

#include "finsight/errors.hpp"
#include "finsight/rng.hpp"
#include "finsight/uwdeg.hpp"

namespace finsight::uw {

namespace {

constexpr int kSuper = 4;  // supersamples per pixel side
// Body semi-major axis as a fraction of nose-to-tail length.
constexpr double kBodyFraction = 1.0 / 2.5;
// Conservative bounding radius of the fish in units of the semi-major axis.
constexpr double kReach = 1.6;

struct Fish {
  double cx, cy, a, b, angle;
  std::array<double, 3> color;
  double stripe_freq;
};

// Body ellipse plus a triangular tail fin behind it, in fish-local coords.
bool inside(const Fish& f, double u, double v) {
  if ((u * u) / (f.a * f.a) + (v * v) / (f.b * f.b) <= 1.0) return true;
  const double root = -0.8 * f.a, tip = -1.5 * f.a;
  if (u > root || u < tip) return false;
  return std::abs(v) <= 0.9 * f.b * (root - u) / (root - tip);
}

struct Coverage {
  std::size_t x0 = 0, y0 = 0, w = 0, h = 0;
  std::vector<double> cov;
  SceneBox box;
  bool empty = true;
};

Coverage rasterize(const Fish& f, std::size_t width, std::size_t height) {
  Coverage c;
  const double r = kReach * f.a;
  const auto lo = [](double v) { return static_cast<std::size_t>(std::max(0.0, std::floor(v))); };
  c.x0 = lo(f.cx - r);
  c.y0 = lo(f.cy - r);
  const std::size_t x1 = std::min(width, static_cast<std::size_t>(std::ceil(f.cx + r)) + 1);
  const std::size_t y1 = std::min(height, static_cast<std::size_t>(std::ceil(f.cy + r)) + 1);
  c.w = x1 - c.x0;
  c.h = y1 - c.y0;
  c.cov.assign(c.w * c.h, 0.0);
  const double ca = std::cos(f.angle), sa = std::sin(f.angle);
  std::size_t bx1 = width, by1 = height, bx2 = 0, by2 = 0;
  for (std::size_t y = 0; y < c.h; ++y) {
    for (std::size_t x = 0; x < c.w; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = static_cast<double>(c.x0 + x) + (sx + 0.5) / kSuper - f.cx;
          const double py = static_cast<double>(c.y0 + y) + (sy + 0.5) / kSuper - f.cy;
          hits += inside(f, ca * px + sa * py, -sa * px + ca * py) ? 1 : 0;
        }
      }
      if (hits == 0) continue;
      c.cov[y * c.w + x] = static_cast<double>(hits) / (kSuper * kSuper);
      bx1 = std::min(bx1, c.x0 + x);
      by1 = std::min(by1, c.y0 + y);
      bx2 = std::max(bx2, c.x0 + x + 1);
      by2 = std::max(by2, c.y0 + y + 1);
      c.empty = false;
    }
  }
  c.box = {static_cast<double>(bx1), static_cast<double>(by1), static_cast<double>(bx2),
           static_cast<double>(by2), 0};
  return c;
}

double box_iou(const SceneBox& p, const SceneBox& q) {
  const double iw = std::max(0.0, std::min(p.x2, q.x2) - std::max(p.x1, q.x1));
  const double ih = std::max(0.0, std::min(p.y2, q.y2) - std::max(p.y1, q.y1));
  const double inter = iw * ih;
  const double uni = (p.x2 - p.x1) * (p.y2 - p.y1) + (q.x2 - q.x1) * (q.y2 - q.y1) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

Tensor background(const SceneSpec& spec) {
  Rng rng(spec.texture_seed);
  const std::array<double, 3> base{rng.uniform(0.05, 0.2), rng.uniform(0.3, 0.5),
                                   rng.uniform(0.4, 0.6)};
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) {
    waves.push_back({rng.uniform(0.5, 4.0), rng.uniform(0.5, 4.0),
                     rng.uniform(0.0, 2.0 * std::numbers::pi), rng.uniform(0.02, 0.05)});
  }
  Tensor img(Shape{1, 3, spec.height, spec.width});
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);
  for (std::size_t y = 0; y < spec.height; ++y) {
    for (std::size_t x = 0; x < spec.width; ++x) {
      double tex = 0.0;
      for (const Wave& wv : waves) {
        tex += wv.amp * std::sin(2.0 * std::numbers::pi *
                                     (wv.fx * static_cast<double>(x) / w +
                                      wv.fy * static_cast<double>(y) / h) +
                                 wv.phase);
      }
      // Seabed darkens toward the bottom of the frame.
      const double depth = 1.0 - 0.25 * static_cast<double>(y) / h;
      const double grain = 0.015 * rng.normal();
      for (std::size_t c = 0; c < 3; ++c) {
        img.at(0, c, y, x) = std::clamp(base[c] * depth + tex + grain, 0.0, 1.0);
      }
    }
  }
  return img;
}

}  // namespace

void SceneSpec::validate() const {
  if (width < 8 || height < 8) throw ConfigError("scene: image must be at least 8x8");
  if (min_fish > max_fish) throw ConfigError("scene: min_fish exceeds max_fish");
  if (!(min_length > 0.0 && min_length <= max_length)) {
    throw ConfigError("scene: need 0 < min_length <= max_length");
  }
  if (!(min_aspect > 0.0 && min_aspect <= max_aspect && max_aspect <= 1.0)) {
    throw ConfigError("scene: need 0 < min_aspect <= max_aspect <= 1");
  }
  if (!(max_overlap >= 0.0 && max_overlap <= 1.0)) {
    throw ConfigError("scene: max_overlap must lie in [0, 1]");
  }
  if (max_retries == 0) throw ConfigError("scene: max_retries must be positive");
}

nlohmann::json SceneSpec::to_json() const {
  return {{"width", width},           {"height", height},
          {"min_fish", min_fish},     {"max_fish", max_fish},
          {"min_length", min_length}, {"max_length", max_length},
          {"min_aspect", min_aspect}, {"max_aspect", max_aspect},
          {"max_overlap", max_overlap}, {"max_retries", max_retries},
          {"texture_seed", texture_seed}, {"seed", seed}};
}

SceneSpec SceneSpec::from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    s.width = j.value("width", s.width);
    s.height = j.value("height", s.height);
    s.min_fish = j.value("min_fish", s.min_fish);
    s.max_fish = j.value("max_fish", s.max_fish);
    s.min_length = j.value("min_length", s.min_length);
    s.max_length = j.value("max_length", s.max_length);
    s.min_aspect = j.value("min_aspect", s.min_aspect);
    s.max_aspect = j.value("max_aspect", s.max_aspect);
    s.max_overlap = j.value("max_overlap", s.max_overlap);
    s.max_retries = j.value("max_retries", s.max_retries);
    s.texture_seed = j.value("texture_seed", s.texture_seed);
    s.seed = j.value("seed", s.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("scene: ") + e.what());
  }
  return s;
}

Scene synth_scene(const SceneSpec& spec) {
  spec.validate();
  Scene scene;
  scene.image = background(spec);
  Rng rng(spec.seed);
  const auto count = static_cast<std::size_t>(rng.integer(
      static_cast<std::int64_t>(spec.min_fish), static_cast<std::int64_t>(spec.max_fish)));
  const double w = static_cast<double>(spec.width), h = static_cast<double>(spec.height);

  for (std::size_t i = 0; i < count; ++i) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
      Fish f;
      f.a = rng.uniform(spec.min_length, spec.max_length) * kBodyFraction;
      f.b = f.a * rng.uniform(spec.min_aspect, spec.max_aspect);
      f.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      f.color = {rng.uniform(0.55, 0.95), rng.uniform(0.45, 0.85), rng.uniform(0.2, 0.6)};
      f.stripe_freq = rng.uniform(0.5, 1.2);
      const double r = kReach * f.a;
      if (2.0 * r + 2.0 > std::min(w, h)) continue;
      f.cx = rng.uniform(r + 1.0, w - r - 1.0);
      f.cy = rng.uniform(r + 1.0, h - r - 1.0);

      const Coverage c = rasterize(f, spec.width, spec.height);
      if (c.empty) continue;
      const bool clash = std::any_of(scene.boxes.begin(), scene.boxes.end(),
                                     [&](const SceneBox& b) {
                                       return box_iou(b, c.box) > spec.max_overlap;
                                     });
      if (clash) continue;

      const double ca = std::cos(f.angle), sa = std::sin(f.angle);
      for (std::size_t y = 0; y < c.h; ++y) {
        for (std::size_t x = 0; x < c.w; ++x) {
          const double k = c.cov[y * c.w + x];
          if (k == 0.0) continue;
          const double px = static_cast<double>(c.x0 + x) + 0.5 - f.cx;
          const double py = static_cast<double>(c.y0 + y) + 0.5 - f.cy;
          const double u = ca * px + sa * py, v = -sa * px + ca * py;
          // Lighter belly, darker back, faint vertical stripes.
          const double shade = std::clamp(1.0 + 0.25 * v / f.b, 0.6, 1.25) *
                                (1.0 - 0.12 * (std::sin(f.stripe_freq * u) > 0.0 ? 1.0 : 0.0));
          for (std::size_t ch = 0; ch < 3; ++ch) {
            double& pix = scene.image.at(0, ch, c.y0 + y, c.x0 + x);
            pix = std::clamp((1.0 - k) * pix + k * f.color[ch] * shade, 0.0, 1.0);
          }
        }
      }
      scene.boxes.push_back(c.box);
      placed = true;
    }
    if (!placed) {
      throw GenerationError("synth_scene: could not place fish " + std::to_string(i + 1) +
                            " of " + std::to_string(count) + " after " +
                            std::to_string(spec.max_retries) + " attempts");
    }
  }
  return scene;
}

}  // namespace finsight::uw
