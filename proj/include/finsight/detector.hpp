// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Toy single-class detector: strided CBS backbone, pluggable neck and
// bottleneck, anchor-free 1x1 head per output level, SGD trainer.

#ifndef FINSIGHT_DETECTOR_HPP_
#define FINSIGHT_DETECTOR_HPP_

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "finsight/autograd.hpp"
#include "finsight/metrics.hpp"
#include "finsight/msddsp.hpp"
#include "finsight/neck.hpp"
#include "finsight/nn.hpp"
#include "finsight/uwdeg.hpp"
#include "json.hpp"

namespace finsight::det {

enum class BottleneckKind { kPlain, kMsDdsp };

std::string to_string(BottleneckKind k);
BottleneckKind parse_bottleneck(std::string_view name);  // plain | msddsp

struct ArchConfig {
  std::string name = "custom";
  neck::NeckVariant neck = neck::NeckVariant::kPanet;
  BottleneckKind bottleneck = BottleneckKind::kPlain;
  std::array<bool, msddsp::kBranches> branch_enabled{true, true, true, true};
  std::vector<neck::SkipEdge> long_skips{{2, 4}, {3, 5}};
  std::size_t neck_width = 32;
  std::size_t stem_width = 16;
  // C2..C5 channels.
  std::array<std::size_t, 4> backbone_widths{16, 32, 64, 128};
  std::size_t input_size = 96;

  void validate() const;
  nlohmann::json to_json() const;
  static ArchConfig from_json(const nlohmann::json& j);
  // baseline, epa, msddsp, full, full-b2, full-b3, full-b4.
  static ArchConfig preset(std::string_view name);
  static std::vector<std::string> preset_names();
};

inline constexpr std::size_t kHeadOutputs = 5;  // obj, tx, ty, tw, th
inline constexpr double kObjectnessPrior = -4.6;

// Output level for a box whose longer side is `side` pixels.
int assign_level(double side);

/// Owns its parameters; movable, not copyable.
class Detector {
 public:
  static Detector create(const ArchConfig& arch, std::uint64_t seed);

  // images: N x 3 x S x S. Returns raw head maps N x 5 x h x w per level.
  std::map<int, Var> operator()(Tape& t, Var images) const;
  std::map<int, Tensor> forward(const Tensor& images) const;
  // Decode, score threshold, then NMS per image.
  std::vector<std::vector<DetectionBox>> predict(const Tensor& images,
                                                 double score_threshold = 0.001,
                                                 double nms_threshold = 0.5,
                                                 std::size_t max_detections = 100) const;
  // Head input shapes per level (after the bottleneck).
  std::map<int, Shape> head_input_shapes(std::size_t batch = 1) const;

  const ArchConfig& arch() const { return arch_; }
  ParamStore& params() { return *store_; }
  const ParamStore& params() const { return *store_; }
  std::size_t param_count() const { return store_->count(); }

 private:
  ArchConfig arch_;
  std::unique_ptr<ParamStore> store_;
  CbsBlock stem_;
  std::array<CbsBlock, 4> stages_;
  std::optional<neck::NeckNet> neck_;
  std::map<int, std::vector<CbsBlock>> plain_;
  std::map<int, msddsp::MsDdspBlock> msddsp_;
  std::map<int, ConvLayer> heads_;
};

// Decode one image's head maps into boxes (no NMS), clipped to the image.
std::vector<DetectionBox> decode(const std::map<int, Tensor>& head, std::size_t image,
                                 std::size_t input_size, double score_threshold);

/// Per-level training targets for a batch.
struct Targets {
  std::map<int, Tensor> objectness;  // N x 1 x h x w, 0/1
  std::map<int, Tensor> box;         // N x 4 x h x w: ox, oy, log w/s, log h/s
  std::size_t positives = 0;
};

Targets build_targets(const std::vector<std::vector<uw::SceneBox>>& boxes,
                      const std::map<int, Shape>& head_shapes, std::size_t input_size);

struct LossWeights {
  double objectness = 1.0;
  double box = 1.0;
};

// (w_obj * sum of objectness BCE over all cells + w_box * box L1 over
// positive cells) / N. Box terms: |sigmoid(tx) - ox|, |sigmoid(ty) - oy|,
// |tw - log(w/s)|, |th - log(h/s)|.
Var detection_loss(Tape& t, const std::map<int, Var>& head, const Targets& targets,
                   const LossWeights& w = {});

struct TrainConfig {
  double lr = 0.01;
  double momentum = 0.937;
  double weight_decay = 5e-4;
  std::size_t epochs = 30;
  std::size_t batch_size = 8;
  std::uint64_t seed = 0;
  // Linear warmup over the first steps, then linear decay to lr * final_lr_ratio.
  double warmup_epochs = 1.0;
  double final_lr_ratio = 0.01;
  double eval_score_threshold = 0.001;
  // Global gradient-norm ceiling per step; 0 disables clipping.
  double grad_clip = 10.0;
  LossWeights loss;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  // Learning rate at fractional epoch position `progress` in [0, epochs].
  double lr_at(double progress) const;
};

struct SgdHyper {
  double lr = 0.01;
  double momentum = 0.937;
  double weight_decay = 5e-4;
};

// v <- m v + (g + wd p); p <- p - lr v. wd applies only when `decay`.
// TrainingError on a non-finite gradient.
void sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, const SgdHyper& h,
              bool decay, const std::string& name = "param");

/// Momentum buffers keyed by parameter name.
class SgdState {
 public:
  void step(ParamStore& store, const SgdHyper& h);
  const std::map<std::string, Tensor>& velocity() const { return v_; }

 private:
  std::map<std::string, Tensor> v_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double val_map50 = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  double initial_loss = 0.0;
  std::size_t best_epoch = 0;
  double best_val_map50 = 0.0;

  std::string log_csv() const;
};

using Split = std::vector<const uw::DatasetItem*>;

Tensor stack_images(const Split& items, std::size_t begin, std::size_t end);

// Mean loss over `items` without updating parameters.
double dataset_loss(const Detector& model, const Split& items, const TrainConfig& cfg);

EvalResult evaluate(const Detector& model, const Split& items,
                    double score_threshold = 0.001, std::size_t batch = 16);

// Scales all gradients so their global L2 norm is at most `max_norm`.
// Returns the norm before scaling. TrainingError if it is not finite.
double clip_gradients(ParamStore& store, double max_norm);

// Trains in place; restores the parameters of the best validation epoch.
// `on_epoch` is called after each epoch when set.
TrainResult train(Detector& model, const uw::Dataset& data, const TrainConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Parameters as FSNT records (store order) plus a JSON architecture file.
void save_checkpoint(const Detector& model, const std::filesystem::path& stem);
Detector load_checkpoint(const std::filesystem::path& stem);

}  // namespace finsight::det

#endif  // FINSIGHT_DETECTOR_HPP_
