// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "finsight/detector.hpp"
#include "finsight/errors.hpp"
#include "finsight/rng.hpp"
#include "finsight/serialize.hpp"

namespace finsight::det {

namespace {

std::vector<std::vector<uw::SceneBox>> batch_boxes(const Split& items, std::size_t begin,
                                                   std::size_t end) {
  std::vector<std::vector<uw::SceneBox>> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(items[i]->boxes);
  return out;
}

// Forward and loss for items [begin, end); backward when `grad`.
double batch_loss(const Detector& model, const Split& items, std::size_t begin,
                  std::size_t end, const TrainConfig& cfg, bool grad) {
  Tape t(grad);
  const Var images = t.constant(stack_images(items, begin, end));
  const std::map<int, Var> head = model(t, images);
  std::map<int, Shape> shapes;
  for (const auto& [l, v] : head) shapes[l] = t.value(v).shape();
  const Targets targets =
      build_targets(batch_boxes(items, begin, end), shapes, model.arch().input_size);
  const Var loss = detection_loss(t, head, targets, cfg.loss);
  const double value = t.value(loss)[0];
  if (!std::isfinite(value)) throw TrainingError("non-finite loss");
  if (grad) t.backward(loss);
  return value;
}

std::vector<Tensor> snapshot(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const Parameter& p : store) out.push_back(p.value);
  return out;
}

void restore(ParamStore& store, const std::vector<Tensor>& values) {
  std::size_t i = 0;
  for (Parameter& p : store) p.value = values[i++];
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("train: lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must be in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be non-negative");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (warmup_epochs < 0.0) throw ConfigError("train: warmup_epochs must be non-negative");
  if (final_lr_ratio < 0.0 || final_lr_ratio > 1.0) {
    throw ConfigError("train: final_lr_ratio must be in [0, 1]");
  }
  if (!(grad_clip >= 0.0)) throw ConfigError("train: grad_clip must be non-negative");
  if (loss.objectness < 0.0 || loss.box < 0.0) {
    throw ConfigError("train: loss weights must be non-negative");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"momentum", momentum},
          {"weight_decay", weight_decay},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"seed", seed},
          {"warmup_epochs", warmup_epochs},
          {"final_lr_ratio", final_lr_ratio},
          {"eval_score_threshold", eval_score_threshold},
          {"grad_clip", grad_clip},
          {"loss_objectness", loss.objectness},
          {"loss_box", loss.box}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.momentum = j.value("momentum", c.momentum);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
    c.final_lr_ratio = j.value("final_lr_ratio", c.final_lr_ratio);
    c.eval_score_threshold = j.value("eval_score_threshold", c.eval_score_threshold);
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    c.loss.objectness = j.value("loss_objectness", c.loss.objectness);
    c.loss.box = j.value("loss_box", c.loss.box);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
  c.validate();
  return c;
}

double TrainConfig::lr_at(double progress) const {
  const double e = static_cast<double>(epochs);
  const double p = std::clamp(progress, 0.0, e);
  const double warm = warmup_epochs > 0.0 ? std::min(1.0, 0.1 + 0.9 * p / warmup_epochs) : 1.0;
  const double decay = 1.0 - (1.0 - final_lr_ratio) * p / e;
  return lr * warm * decay;
}

void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdHyper& h,
              bool decay, const std::string& name) {
  if (grad.shape() != param.shape()) {
    throw DimensionError("sgd: gradient " + grad.shape().str() + " for parameter " + name +
                         " " + param.shape().str());
  }
  if (!grad.all_finite()) throw TrainingError("non-finite gradient for " + name);
  if (velocity.shape() != param.shape()) velocity = Tensor(param.shape());
  const double wd = decay ? h.weight_decay : 0.0;
  for (std::size_t i = 0; i < param.numel(); ++i) {
    velocity[i] = h.momentum * velocity[i] + grad[i] + wd * param[i];
    param[i] -= h.lr * velocity[i];
  }
}

void SgdState::step(ParamStore& store, const SgdHyper& h) {
  for (Parameter& p : store) {
    if (p.grad.shape() != p.value.shape()) p.grad = Tensor(p.value.shape());
    sgd_step(p.value, p.grad, v_[p.name], h, p.decay, p.name);
  }
}

double clip_gradients(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (const Parameter& p : store) {
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw TrainingError("non-finite gradient norm");
  if (max_norm > 0.0 && norm > max_norm) {
    for (Parameter& p : store) p.grad *= max_norm / norm;
  }
  return norm;
}

std::string TrainResult::log_csv() const {
  std::ostringstream os;
  os << std::setprecision(10) << "epoch,loss,val_mAP50,lr\n";
  for (const EpochLog& e : log) {
    os << e.epoch << ',' << e.loss << ',' << e.val_map50 << ',' << e.lr << '\n';
  }
  return os.str();
}

Tensor stack_images(const Split& items, std::size_t begin, std::size_t end) {
  if (begin >= end || end > items.size()) throw ValueError("stack_images: bad range");
  const Shape s = items[begin]->image.shape();
  Tensor out(Shape{end - begin, s.c, s.h, s.w});
  const std::size_t per = s.c * s.h * s.w;
  for (std::size_t i = begin; i < end; ++i) {
    const Tensor& img = items[i]->image;
    if (img.shape() != s) {
      throw DimensionError("stack_images: " + img.shape().str() + " vs " + s.str());
    }
    std::copy(img.data().begin(), img.data().end(),
              out.data().begin() + static_cast<std::ptrdiff_t>((i - begin) * per));
  }
  return out;
}

double dataset_loss(const Detector& model, const Split& items, const TrainConfig& cfg) {
  if (items.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t b = 0; b < items.size(); b += cfg.batch_size) {
    const std::size_t e = std::min(items.size(), b + cfg.batch_size);
    total += batch_loss(model, items, b, e, cfg, false) * static_cast<double>(e - b);
  }
  return total / static_cast<double>(items.size());
}

EvalResult evaluate(const Detector& model, const Split& items, double score_threshold,
                    std::size_t batch) {
  std::vector<std::vector<DetectionBox>> preds, gts;
  for (std::size_t b = 0; b < items.size(); b += batch) {
    const std::size_t e = std::min(items.size(), b + batch);
    for (auto& p : model.predict(stack_images(items, b, e), score_threshold)) {
      preds.push_back(std::move(p));
    }
    for (std::size_t i = b; i < e; ++i) {
      std::vector<DetectionBox> g;
      for (const uw::SceneBox& s : items[i]->boxes) {
        g.push_back({s.x1, s.y1, s.x2, s.y2, 1.0, s.class_id});
      }
      gts.push_back(std::move(g));
    }
  }
  return evaluate_map(preds, gts, 0.5);
}

TrainResult train(Detector& model, const uw::Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  Split train_items = data.split("train");
  const Split val_items = data.split("val");
  if (train_items.empty()) throw TrainingError("empty training split");

  TrainResult result;
  result.initial_loss = dataset_loss(model, train_items, cfg);
  ParamStore& store = model.params();
  SgdState sgd;
  std::vector<Tensor> best;
  const std::size_t steps_per_epoch = (train_items.size() + cfg.batch_size - 1) / cfg.batch_size;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    for (std::size_t i = train_items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(i) - 1));
      std::swap(train_items[i - 1], train_items[j]);
    }
    double total = 0.0;
    double lr = 0.0;
    for (std::size_t step = 0; step < steps_per_epoch; ++step) {
      const std::size_t b = step * cfg.batch_size;
      const std::size_t e = std::min(train_items.size(), b + cfg.batch_size);
      store.zero_grad();
      total += batch_loss(model, train_items, b, e, cfg, true) * static_cast<double>(e - b);
      const double progress = static_cast<double>(epoch - 1) +
                              static_cast<double>(step) / static_cast<double>(steps_per_epoch);
      clip_gradients(store, cfg.grad_clip);
      lr = cfg.lr_at(progress);
      sgd.step(store, {lr, cfg.momentum, cfg.weight_decay});
    }
    EpochLog log{epoch, total / static_cast<double>(train_items.size()), 0.0, lr};
    log.val_map50 = val_items.empty()
                        ? 0.0
                        : evaluate(model, val_items, cfg.eval_score_threshold).map50;
    result.log.push_back(log);
    if (best.empty() || log.val_map50 > result.best_val_map50) {
      result.best_val_map50 = log.val_map50;
      result.best_epoch = epoch;
      best = snapshot(store);
    }
    if (on_epoch) on_epoch(log);
  }
  restore(store, best);
  return result;
}

void save_checkpoint(const Detector& model, const std::filesystem::path& stem) {
  nlohmann::json params = nlohmann::json::array();
  std::vector<Tensor> values;
  for (const Parameter& p : model.params()) {
    const Shape s = p.value.shape();
    params.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
    values.push_back(p.value);
  }
  std::filesystem::path weights = stem, meta = stem;
  weights += ".fsnt";
  meta += ".json";
  save_tensors(weights, values);
  std::ofstream os(meta);
  if (!os) throw ParseError("cannot write " + meta.string());
  os << nlohmann::json{{"arch", model.arch().to_json()}, {"params", params}}.dump(2) << '\n';
}

Detector load_checkpoint(const std::filesystem::path& stem) {
  std::filesystem::path weights = stem, meta = stem;
  weights += ".fsnt";
  meta += ".json";
  std::ifstream is(meta);
  if (!is) throw ParseError("cannot read " + meta.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(meta.string() + ": " + e.what());
  }
  if (!j.contains("arch") || !j.contains("params")) {
    throw ParseError(meta.string() + ": missing arch or params");
  }
  Detector model = Detector::create(ArchConfig::from_json(j.at("arch")), 0);
  const std::vector<Tensor> values = load_tensors(weights);
  const auto& names = j.at("params");
  if (values.size() != model.params().size() || names.size() != values.size()) {
    throw ParseError("checkpoint holds " + std::to_string(values.size()) +
                     " tensors, model has " + std::to_string(model.params().size()));
  }
  std::size_t i = 0;
  for (Parameter& p : model.params()) {
    if (names[i].value("name", "") != p.name || values[i].shape() != p.value.shape()) {
      throw ParseError("checkpoint parameter " + std::to_string(i) + " does not match " +
                       p.name);
    }
    p.value = values[i++];
  }
  return model;
}

}  // namespace finsight::det
