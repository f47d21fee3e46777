// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include "finsight/detector.hpp"
#include "finsight/errors.hpp"
#include "finsight/rng.hpp"

namespace finsight::det {

namespace {

constexpr int kFirstLevel = 3;
constexpr int kLastLevel = 5;
constexpr double kMaxLogSize = 6.0;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::string level_name(int l) { return "p" + std::to_string(l); }

}  // namespace

std::string to_string(BottleneckKind k) {
  return k == BottleneckKind::kPlain ? "plain" : "msddsp";
}

BottleneckKind parse_bottleneck(std::string_view name) {
  if (name == "plain") return BottleneckKind::kPlain;
  if (name == "msddsp" || name == "ms-ddsp") return BottleneckKind::kMsDdsp;
  throw ConfigError("unknown bottleneck '" + std::string(name) + "'");
}

void ArchConfig::validate() const {
  if (neck_width == 0 || stem_width == 0) throw ConfigError("arch: widths must be positive");
  for (std::size_t w : backbone_widths) {
    if (w == 0) throw ConfigError("arch: backbone widths must be positive");
  }
  if (input_size < 64 || input_size % 32 != 0) {
    throw ConfigError("arch: input_size must be a multiple of 32 and at least 64");
  }
  if (bottleneck == BottleneckKind::kMsDdsp && neck_width % 16 != 0) {
    throw ConfigError("arch: msddsp needs a neck width divisible by 16");
  }
  neck::NeckConfig nc;
  nc.variant = neck;
  nc.width = neck_width;
  nc.long_skips = long_skips;
  nc.validate();
}

nlohmann::json ArchConfig::to_json() const {
  nlohmann::json skips = nlohmann::json::array();
  for (const auto& e : long_skips) skips.push_back({e.source, e.target});
  return {{"name", name},
          {"neck", neck::to_string(neck)},
          {"bottleneck", to_string(bottleneck)},
          {"branch_enabled", branch_enabled},
          {"long_skips", skips},
          {"neck_width", neck_width},
          {"stem_width", stem_width},
          {"backbone_widths", backbone_widths},
          {"input_size", input_size}};
}

ArchConfig ArchConfig::from_json(const nlohmann::json& j) {
  ArchConfig a;
  try {
    a.name = j.value("name", a.name);
    if (j.contains("neck")) a.neck = neck::parse_variant(j.at("neck").get<std::string>());
    if (j.contains("bottleneck")) {
      a.bottleneck = parse_bottleneck(j.at("bottleneck").get<std::string>());
    }
    if (j.contains("branch_enabled")) {
      a.branch_enabled = j.at("branch_enabled").get<std::array<bool, msddsp::kBranches>>();
    }
    if (j.contains("long_skips")) {
      a.long_skips.clear();
      for (const auto& e : j.at("long_skips")) {
        a.long_skips.push_back({e.at(0).get<int>(), e.at(1).get<int>()});
      }
    }
    a.neck_width = j.value("neck_width", a.neck_width);
    a.stem_width = j.value("stem_width", a.stem_width);
    if (j.contains("backbone_widths")) {
      a.backbone_widths = j.at("backbone_widths").get<std::array<std::size_t, 4>>();
    }
    a.input_size = j.value("input_size", a.input_size);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("arch: ") + e.what());
  }
  a.validate();
  return a;
}

std::vector<std::string> ArchConfig::preset_names() {
  return {"baseline", "epa", "msddsp", "full", "full-b2", "full-b3", "full-b4"};
}

ArchConfig ArchConfig::preset(std::string_view name) {
  ArchConfig a;
  a.name = std::string(name);
  const bool epa = name == "epa" || name.starts_with("full");
  const bool ms = name == "msddsp" || name.starts_with("full");
  if (name != "baseline" && !epa && !ms) {
    throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
  }
  a.neck = epa ? neck::NeckVariant::kEpaFpn : neck::NeckVariant::kPanet;
  a.bottleneck = ms ? BottleneckKind::kMsDdsp : BottleneckKind::kPlain;
  if (name.starts_with("full-b")) {
    const std::string_view k = name.substr(6);
    if (k != "2" && k != "3" && k != "4") {
      throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
    }
    a.branch_enabled[static_cast<std::size_t>(k[0] - '1')] = false;
  } else if (name != "full" && name.starts_with("full")) {
    throw ConfigError("unknown architecture preset '" + std::string(name) + "'");
  }
  return a;
}

int assign_level(double side) {
  if (side <= 20.0) return 3;
  if (side <= 40.0) return 4;
  return 5;
}

Detector Detector::create(const ArchConfig& arch, std::uint64_t seed) {
  arch.validate();
  Detector d;
  d.arch_ = arch;
  d.store_ = std::make_unique<ParamStore>();
  ParamStore& store = *d.store_;
  Rng rng(seed);

  d.stem_ = CbsBlock::create(store, "backbone.stem", 3, arch.stem_width, 3, 2, rng);
  std::size_t prev = arch.stem_width;
  for (std::size_t i = 0; i < 4; ++i) {
    d.stages_[i] = CbsBlock::create(store, "backbone.c" + std::to_string(i + 2), prev,
                                    arch.backbone_widths[i], 3, 2, rng);
    prev = arch.backbone_widths[i];
  }

  neck::NeckConfig nc;
  nc.variant = arch.neck;
  nc.width = arch.neck_width;
  nc.long_skips = arch.long_skips;
  neck::LevelWidths widths;
  for (int l = kFirstLevel; l <= kLastLevel; ++l) {
    widths[l] = arch.backbone_widths[static_cast<std::size_t>(l - 2)];
  }
  if (arch.neck == neck::NeckVariant::kEpaFpn) {
    for (const auto& e : arch.long_skips) {
      if (e.source == 2) widths[2] = arch.backbone_widths[0];
    }
  }
  d.neck_ = neck::NeckNet::create(store, "neck", nc, widths, rng);

  const std::size_t w = arch.neck_width;
  for (int l = kFirstLevel; l <= kLastLevel; ++l) {
    const std::string base = "bottleneck." + level_name(l);
    if (arch.bottleneck == BottleneckKind::kPlain) {
      d.plain_[l] = {CbsBlock::create(store, base + ".cv1", w, w, 3, 1, rng),
                     CbsBlock::create(store, base + ".cv2", w, w, 3, 1, rng)};
    } else {
      msddsp::MsDdspConfig mc;
      mc.channels = w;
      mc.branch_enabled = arch.branch_enabled;
      // Drop dilations whose padding would swallow the whole map.
      const std::size_t side = arch.input_size >> l;
      std::erase_if(mc.dilations, [&](std::size_t dl) { return dl >= side; });
      d.msddsp_[l] = msddsp::MsDdspBlock::create(store, base, mc, rng);
    }
    ConvLayer head = ConvLayer::create(store, "head." + level_name(l),
                                       ConvSpec::pointwise(w, kHeadOutputs, true), rng);
    head.bias->value.fill(0.0);
    head.bias->value[0] = kObjectnessPrior;
    d.heads_[l] = head;
  }
  return d;
}

std::map<int, Var> Detector::operator()(Tape& t, Var images) const {
  const Shape s = t.value(images).shape();
  if (s.c != 3 || s.h != arch_.input_size || s.w != arch_.input_size) {
    throw DimensionError("detector: expected N x 3 x " + std::to_string(arch_.input_size) +
                         " x " + std::to_string(arch_.input_size) + ", got " + s.str());
  }
  Var x = stem_(t, images);
  std::map<int, Var> c;
  for (std::size_t i = 0; i < 4; ++i) {
    x = stages_[i](t, x);
    c[static_cast<int>(i) + 2] = x;
  }
  std::map<int, Var> inputs;
  for (const auto& [l, v] : c) {
    if (neck_->graph().input_node(l) >= 0) inputs[l] = v;
  }
  const std::map<int, Var> p = (*neck_)(t, inputs);
  std::map<int, Var> out;
  for (const auto& [l, feat] : p) {
    Var y = feat;
    if (arch_.bottleneck == BottleneckKind::kPlain) {
      const auto& blocks = plain_.at(l);
      y = ag::add(t, feat, blocks[1](t, blocks[0](t, feat)));
    } else {
      y = msddsp_.at(l)(t, feat);
    }
    out[l] = heads_.at(l)(t, y);
  }
  return out;
}

std::map<int, Tensor> Detector::forward(const Tensor& images) const {
  Tape t(false);
  std::map<int, Tensor> out;
  for (const auto& [l, v] : (*this)(t, t.constant(images))) out[l] = t.value(v);
  return out;
}

std::map<int, Shape> Detector::head_input_shapes(std::size_t batch) const {
  Tape t(false);
  const Var images = t.constant(Tensor(Shape{batch, 3, arch_.input_size, arch_.input_size}));
  std::map<int, Shape> shapes;
  // The head is 1x1, so its input differs from its output only in channels.
  for (const auto& [l, v] : (*this)(t, images)) {
    Shape s = t.value(v).shape();
    s.c = heads_.at(l).spec.in_channels;
    shapes[l] = s;
  }
  return shapes;
}

std::vector<DetectionBox> decode(const std::map<int, Tensor>& head, std::size_t image,
                                 std::size_t input_size, double score_threshold) {
  std::vector<DetectionBox> out;
  const double limit = static_cast<double>(input_size);
  for (const auto& [l, h] : head) {
    const Shape s = h.shape();
    if (s.c != kHeadOutputs) throw DimensionError("decode: head map " + s.str());
    const double stride = static_cast<double>(std::size_t{1} << l);
    for (std::size_t gy = 0; gy < s.h; ++gy) {
      for (std::size_t gx = 0; gx < s.w; ++gx) {
        const double score = sigmoid(h.at(image, 0, gy, gx));
        if (score < score_threshold) continue;
        const double cx = (static_cast<double>(gx) + sigmoid(h.at(image, 1, gy, gx))) * stride;
        const double cy = (static_cast<double>(gy) + sigmoid(h.at(image, 2, gy, gx))) * stride;
        const double bw =
            stride * std::exp(std::clamp(h.at(image, 3, gy, gx), -kMaxLogSize, kMaxLogSize));
        const double bh =
            stride * std::exp(std::clamp(h.at(image, 4, gy, gx), -kMaxLogSize, kMaxLogSize));
        DetectionBox b{std::clamp(cx - bw / 2, 0.0, limit), std::clamp(cy - bh / 2, 0.0, limit),
                       std::clamp(cx + bw / 2, 0.0, limit), std::clamp(cy + bh / 2, 0.0, limit),
                       score, 0};
        if (b.x2 - b.x1 > 1e-6 && b.y2 - b.y1 > 1e-6) out.push_back(b);
      }
    }
  }
  return out;
}

std::vector<std::vector<DetectionBox>> Detector::predict(const Tensor& images,
                                                         double score_threshold,
                                                         double nms_threshold,
                                                         std::size_t max_detections) const {
  const std::map<int, Tensor> head = forward(images);
  std::vector<std::vector<DetectionBox>> out;
  for (std::size_t n = 0; n < images.shape().n; ++n) {
    std::vector<DetectionBox> kept =
        nms(decode(head, n, arch_.input_size, score_threshold), nms_threshold);
    if (kept.size() > max_detections) kept.resize(max_detections);
    out.push_back(std::move(kept));
  }
  return out;
}

Targets build_targets(const std::vector<std::vector<uw::SceneBox>>& boxes,
                      const std::map<int, Shape>& head_shapes, std::size_t input_size) {
  Targets t;
  for (const auto& [l, s] : head_shapes) {
    if (s.n != boxes.size()) {
      throw DimensionError("build_targets: batch " + std::to_string(boxes.size()) +
                           " vs head " + s.str());
    }
    t.objectness[l] = Tensor(Shape{s.n, 1, s.h, s.w});
    t.box[l] = Tensor(Shape{s.n, 4, s.h, s.w});
  }
  const int lo = head_shapes.begin()->first, hi = head_shapes.rbegin()->first;
  for (std::size_t n = 0; n < boxes.size(); ++n) {
    for (const uw::SceneBox& b : boxes[n]) {
      const double bw = b.x2 - b.x1, bh = b.y2 - b.y1;
      if (!(bw > 0.0 && bh > 0.0)) throw ValueError("build_targets: degenerate box");
      const int l = std::clamp(assign_level(std::max(bw, bh)), lo, hi);
      const Shape s = head_shapes.at(l);
      const double stride = static_cast<double>(input_size) / static_cast<double>(s.w);
      const double cx = 0.5 * (b.x1 + b.x2) / stride, cy = 0.5 * (b.y1 + b.y2) / stride;
      const auto gx = std::min(static_cast<std::size_t>(cx), s.w - 1);
      const auto gy = std::min(static_cast<std::size_t>(cy), s.h - 1);
      Tensor& obj = t.objectness[l];
      // One object per cell; the first box listed keeps it.
      if (obj.at(n, 0, gy, gx) != 0.0) continue;
      obj.at(n, 0, gy, gx) = 1.0;
      Tensor& box = t.box[l];
      box.at(n, 0, gy, gx) = cx - static_cast<double>(gx);
      box.at(n, 1, gy, gx) = cy - static_cast<double>(gy);
      box.at(n, 2, gy, gx) = std::log(bw / stride);
      box.at(n, 3, gy, gx) = std::log(bh / stride);
      ++t.positives;
    }
  }
  return t;
}

Var detection_loss(Tape& t, const std::map<int, Var>& head, const Targets& targets,
                   const LossWeights& w) {
  std::vector<Var> parents;
  std::vector<Tensor> grads;
  double total = 0.0;
  std::size_t batch = 0;
  for (const auto& [l, v] : head) {
    const Tensor& p = t.value(v);
    const Shape s = p.shape();
    const Tensor& obj = targets.objectness.at(l);
    const Tensor& box = targets.box.at(l);
    if (obj.shape() != Shape{s.n, 1, s.h, s.w} || s.c != kHeadOutputs) {
      throw DimensionError("detection_loss: head " + s.str() + " vs target " +
                           obj.shape().str());
    }
    batch = s.n;
    Tensor g(s);
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t y = 0; y < s.h; ++y) {
        for (std::size_t x = 0; x < s.w; ++x) {
          const double z = p.at(n, 0, y, x), target = obj.at(n, 0, y, x);
          // Stable BCE with logits.
          total += w.objectness * (std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z))));
          g.at(n, 0, y, x) = w.objectness * (sigmoid(z) - target);
          if (target == 0.0) continue;
          for (std::size_t k = 0; k < 4; ++k) {
            const double raw = p.at(n, k + 1, y, x);
            const bool offset = k < 2;
            const double pred = offset ? sigmoid(raw) : raw;
            const double diff = pred - box.at(n, k, y, x);
            total += w.box * std::abs(diff);
            const double sign = diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0;
            g.at(n, k + 1, y, x) = w.box * sign * (offset ? pred * (1.0 - pred) : 1.0);
          }
        }
      }
    }
    parents.push_back(v);
    grads.push_back(std::move(g));
  }
  const double scale = batch == 0 ? 0.0 : 1.0 / static_cast<double>(batch);
  for (Tensor& g : grads) g *= scale;
  return t.record(Tensor::scalar(total * scale), parents,
                  [parents, grads](Tape& tape, const Tensor& go) {
                    for (std::size_t i = 0; i < parents.size(); ++i) {
                      Tensor g = grads[i];
                      g *= go[0];
                      tape.accumulate(parents[i], g);
                    }
                  });
}

}  // namespace finsight::det
