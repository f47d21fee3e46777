// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "finsight/detector.hpp"
#include "finsight/errors.hpp"
#include "finsight/gradcheck.hpp"

namespace finsight::det {
namespace {

DetectionBox box(double x1, double y1, double x2, double y2, double score = 1.0) {
  return {x1, y1, x2, y2, score, 0};
}

// ---- iou / nms ----

TEST(Iou, HandArithmetic) {
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 2, 2), box(1, 0, 3, 2)), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(iou(box(1, 2, 5, 7), box(1, 2, 5, 7)), 1.0);
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 1, 1), box(2, 2, 3, 3)), 0.0);
  // Touching edges share no area.
  EXPECT_DOUBLE_EQ(iou(box(0, 0, 1, 1), box(1, 0, 2, 1)), 0.0);
}

TEST(Iou, DegenerateBoxThrows) {
  EXPECT_THROW(iou(box(0, 0, 0, 2), box(0, 0, 1, 1)), ValueError);
  EXPECT_THROW(iou(box(0, 0, 1, 1), box(3, 0, 2, 1)), ValueError);
  EXPECT_THROW(iou(box(0, 0, std::nan(""), 1), box(0, 0, 1, 1)), ValueError);
}

TEST(Nms, IdenticalBoxesKeepHigherScore) {
  const auto kept = nms({box(0, 0, 4, 4, 0.8), box(0, 0, 4, 4, 0.9)}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.9);
}

TEST(Nms, DisjointBoxesAllKept) {
  const auto kept = nms({box(0, 0, 1, 1, 0.3), box(5, 5, 6, 6, 0.7), box(9, 0, 10, 1, 0.5)}, 0.5);
  ASSERT_EQ(kept.size(), 3u);
  EXPECT_DOUBLE_EQ(kept[0].score, 0.7);
  EXPECT_DOUBLE_EQ(kept[1].score, 0.5);
  EXPECT_DOUBLE_EQ(kept[2].score, 0.3);
}

TEST(Nms, IouExactlyAtThresholdIsSuppressed) {
  // Intersection 2, union 4.
  const DetectionBox a = box(0, 0, 3, 1, 0.9), b = box(1, 0, 4, 1, 0.8);
  ASSERT_EQ(iou(a, b), 0.5);
  EXPECT_EQ(nms({a, b}, 0.5).size(), 1u);
  EXPECT_EQ(nms({a, b}, 0.5000001).size(), 2u);
}

TEST(Nms, EqualScoresBreakTiesByIndex) {
  const auto kept = nms({box(0, 0, 4, 4, 0.5), box(0, 0, 4, 5, 0.5)}, 0.5);
  ASSERT_EQ(kept.size(), 1u);
  EXPECT_DOUBLE_EQ(kept[0].y2, 4.0);
}

TEST(Nms, NonFiniteScoreThrows) {
  EXPECT_THROW(nms({box(0, 0, 1, 1, std::nan(""))}, 0.5), ValueError);
}

// ---- evaluate_map ----

TEST(EvaluateMap, SingleCorrectPrediction) {
  // IoU 0.9: 9 x 10 inside 10 x 10.
  const EvalResult r = evaluate_map({{box(0, 0, 9, 10, 0.7)}}, {{box(0, 0, 10, 10)}});
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 1.0);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 1.0);
}

TEST(EvaluateMap, NoPredictions) {
  const EvalResult r = evaluate_map({{}}, {{box(0, 0, 10, 10)}});
  EXPECT_DOUBLE_EQ(r.map50, 0.0);
  EXPECT_DOUBLE_EQ(r.recall, 0.0);
  EXPECT_DOUBLE_EQ(r.f1, 0.0);
  EXPECT_EQ(r.num_gt, 1u);
}

TEST(EvaluateMap, TruePositiveThenFalsePositive) {
  const EvalResult r =
      evaluate_map({{box(0, 0, 10, 10, 0.9), box(20, 20, 30, 30, 0.8)}}, {{box(0, 0, 10, 10)}});
  EXPECT_DOUBLE_EQ(r.map50, 1.0);
  EXPECT_DOUBLE_EQ(r.precision, 0.5);
  EXPECT_DOUBLE_EQ(r.recall, 1.0);
  EXPECT_DOUBLE_EQ(r.f1, 2.0 * 0.5 / 1.5);
  EXPECT_EQ(r.true_positives, 1u);
  EXPECT_EQ(r.false_positives, 1u);
}

TEST(EvaluateMap, FalsePositiveFirstHalvesAp) {
  // PR points (0, 0) then (0.5, 1); envelope 0.5 over [0, 1].
  const EvalResult r =
      evaluate_map({{box(20, 20, 30, 30, 0.9), box(0, 0, 10, 10, 0.8)}}, {{box(0, 0, 10, 10)}});
  EXPECT_DOUBLE_EQ(r.map50, 0.5);
}

TEST(EvaluateMap, EachGroundTruthMatchedOnce) {
  const EvalResult r =
      evaluate_map({{box(0, 0, 10, 10, 0.9), box(0, 0, 10, 10, 0.8)}}, {{box(0, 0, 10, 10)}});
  EXPECT_EQ(r.true_positives, 1u);
  EXPECT_EQ(r.false_positives, 1u);
  ASSERT_EQ(r.matches.size(), 2u);
  EXPECT_EQ(r.matches[0].gt, 0);
  EXPECT_EQ(r.matches[1].gt, -1);
}

TEST(EvaluateMap, PrefersHighestIouGroundTruth) {
  const EvalResult r = evaluate_map({{box(1, 0, 11, 10, 0.9)}},
                                    {{box(0, 0, 10, 10), box(1, 0, 11, 10)}});
  ASSERT_EQ(r.matches.size(), 1u);
  EXPECT_EQ(r.matches[0].gt, 1);
  EXPECT_DOUBLE_EQ(r.matches[0].iou, 1.0);
}

TEST(EvaluateMap, BelowThresholdIsFalsePositive) {
  const EvalResult r = evaluate_map({{box(0, 0, 2, 2)}}, {{box(1, 0, 3, 2)}});
  EXPECT_EQ(r.true_positives, 0u);
  EXPECT_DOUBLE_EQ(r.map50, 0.0);
}

TEST(EvaluateMap, SizeMismatchThrows) {
  EXPECT_THROW(evaluate_map({{}, {}}, {{}}), DimensionError);
}

TEST(EvaluateMap, EmptyEverything) {
  const EvalResult r = evaluate_map({}, {});
  EXPECT_DOUBLE_EQ(r.map50, 0.0);
  EXPECT_DOUBLE_EQ(r.precision, 0.0);
}

std::vector<std::vector<DetectionBox>> random_gts(Rng& rng, std::size_t images) {
  std::vector<std::vector<DetectionBox>> g(images);
  for (auto& img : g) {
    const auto n = rng.integer(0, 3);
    for (std::int64_t k = 0; k < n; ++k) {
      const double x = rng.uniform(0, 60), y = rng.uniform(0, 60);
      img.push_back(box(x, y, x + rng.uniform(8, 30), y + rng.uniform(8, 30)));
    }
  }
  return g;
}

// Predictions near the ground truth plus clutter, with coarse scores so
// that ties occur.
std::vector<std::vector<DetectionBox>> random_preds(
    Rng& rng, const std::vector<std::vector<DetectionBox>>& gts) {
  std::vector<std::vector<DetectionBox>> p(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    for (const DetectionBox& g : gts[i]) {
      const double j = rng.uniform(-4, 4);
      p[i].push_back(box(g.x1 + j, g.y1, g.x2 + j, g.y2, std::round(rng.uniform() * 4) / 4));
    }
    const auto clutter = rng.integer(0, 3);
    for (std::int64_t k = 0; k < clutter; ++k) {
      const double x = rng.uniform(0, 80), y = rng.uniform(0, 80);
      p[i].push_back(box(x, y, x + 10, y + 10, std::round(rng.uniform() * 4) / 4));
    }
  }
  return p;
}

TEST(EvaluateMapProperty, PermutationInvariant) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed);
    auto gts = random_gts(rng, 6);
    auto preds = random_preds(rng, gts);
    const EvalResult a = evaluate_map(preds, gts);
    for (auto& p : preds) std::reverse(p.begin(), p.end());
    std::reverse(preds.begin(), preds.end());
    std::reverse(gts.begin(), gts.end());
    const EvalResult b = evaluate_map(preds, gts);
    EXPECT_DOUBLE_EQ(a.map50, b.map50) << seed;
    EXPECT_DOUBLE_EQ(a.precision, b.precision) << seed;
    EXPECT_DOUBLE_EQ(a.recall, b.recall) << seed;
    EXPECT_GE(a.map50, 0.0);
    EXPECT_LE(a.map50, 1.0);
  }
}

TEST(EvaluateMapProperty, LowestScoreFalsePositiveNeverRaisesAp) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed + 100);
    const auto gts = random_gts(rng, 5);
    auto preds = random_preds(rng, gts);
    const EvalResult before = evaluate_map(preds, gts);
    preds[0].push_back(box(200, 200, 210, 210, -1.0));
    const EvalResult after = evaluate_map(preds, gts);
    EXPECT_LE(after.map50, before.map50 + 1e-15) << seed;
  }
}

TEST(EvaluateMapProperty, AddingTruePositiveNeverLowersRecall) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    Rng rng(seed + 200);
    auto gts = random_gts(rng, 5);
    gts[0].push_back(box(300, 300, 320, 320));
    auto preds = random_preds(rng, gts);
    preds[0].pop_back();
    const EvalResult before = evaluate_map(preds, gts);
    preds[0].push_back(box(300, 300, 320, 320, 0.5));
    const EvalResult after = evaluate_map(preds, gts);
    EXPECT_GE(after.recall, before.recall) << seed;
  }
}

TEST(EvaluateMap, F1Formula) {
  EXPECT_DOUBLE_EQ(f1_score(0.5, 1.0), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(f1_score(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(f1_score(0.8, 0.4), 2 * 0.8 * 0.4 / 1.2);
}

// ---- sgd ----

Tensor scalar(double v) { return Tensor::scalar(v); }

TEST(Sgd, PlainStep) {
  Tensor p = scalar(1.0), v;
  sgd_step(p, scalar(1.0), v, {0.1, 0.0, 0.0}, true);
  EXPECT_DOUBLE_EQ(p[0], 0.9);
}

TEST(Sgd, WeightDecayOnly) {
  Tensor p = scalar(1.0), v;
  sgd_step(p, scalar(0.0), v, {0.1, 0.0, 0.5}, true);
  EXPECT_DOUBLE_EQ(v[0], 0.5);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
}

TEST(Sgd, DecayFlagSkipsWeightDecay) {
  Tensor p = scalar(1.0), v;
  sgd_step(p, scalar(0.0), v, {0.1, 0.0, 0.5}, false);
  EXPECT_DOUBLE_EQ(p[0], 1.0);
}

TEST(Sgd, MomentumRecursion) {
  Tensor p = scalar(0.0), v;
  sgd_step(p, scalar(1.0), v, {0.1, 0.9, 0.0}, true);
  EXPECT_DOUBLE_EQ(p[0], -0.1);
  sgd_step(p, scalar(1.0), v, {0.1, 0.9, 0.0}, true);
  EXPECT_DOUBLE_EQ(v[0], 1.9);
  EXPECT_DOUBLE_EQ(p[0], -0.29);
}

TEST(Sgd, ZeroLearningRateIsIdentity) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor p = rng.uniform_tensor(Shape{2, 3, 1, 4}, -2, 2);
    const Tensor before = p;
    Tensor v = rng.uniform_tensor(p.shape(), -1, 1);
    sgd_step(p, rng.uniform_tensor(p.shape(), -5, 5), v, {0.0, 0.937, 5e-4}, true);
    EXPECT_TRUE(std::ranges::equal(p.data(), before.data()));
  }
}

TEST(Sgd, NanGradientThrows) {
  Tensor p = scalar(1.0), v;
  try {
    sgd_step(p, scalar(std::nan("")), v, {0.1, 0.0, 0.0}, true, "head.p3.weight");
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("head.p3.weight"), std::string::npos);
  }
}

TEST(Sgd, ShapeMismatchThrows) {
  Tensor p(Shape{1, 1, 1, 2}), v;
  EXPECT_THROW(sgd_step(p, scalar(1.0), v, {}, true), DimensionError);
}

TEST(Sgd, ClipGradientsBoundsGlobalNorm) {
  ParamStore store;
  store.add("a", Tensor(Shape{1, 1, 1, 1}), true).grad = scalar(3.0);
  store.add("b", Tensor(Shape{1, 1, 1, 1}), true).grad = scalar(4.0);
  EXPECT_DOUBLE_EQ(clip_gradients(store, 1.0), 5.0);
  EXPECT_DOUBLE_EQ(store.get("a").grad[0], 0.6);
  EXPECT_DOUBLE_EQ(store.get("b").grad[0], 0.8);
  EXPECT_DOUBLE_EQ(clip_gradients(store, 0.0), 1.0);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weight_decay = -1e-4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(TrainConfig, JsonRoundTripAndSchedule) {
  TrainConfig c;
  c.epochs = 12;
  c.seed = 77;
  const TrainConfig back = TrainConfig::from_json(c.to_json());
  EXPECT_EQ(back.to_json(), c.to_json());
  EXPECT_DOUBLE_EQ(c.lr_at(0.0), 0.1 * c.lr);
  EXPECT_NEAR(c.lr_at(12.0), c.lr * c.final_lr_ratio, 1e-15);
  for (double p = 1.0; p < 12.0; p += 0.5) EXPECT_LT(c.lr_at(p + 0.5), c.lr_at(p));
}

// ---- model ----

// Small enough for finite differences over many parameters.
ArchConfig tiny(std::string_view preset) {
  ArchConfig a = ArchConfig::preset(preset);
  a.input_size = 64;
  a.stem_width = 4;
  a.backbone_widths = {8, 8, 16, 16};
  a.neck_width = 16;
  return a;
}

TEST(ArchConfig, PresetsAndJson) {
  for (const std::string& name : ArchConfig::preset_names()) {
    const ArchConfig a = ArchConfig::preset(name);
    EXPECT_EQ(ArchConfig::from_json(a.to_json()).to_json(), a.to_json()) << name;
  }
  EXPECT_EQ(ArchConfig::preset("baseline").neck, neck::NeckVariant::kPanet);
  EXPECT_EQ(ArchConfig::preset("full").neck, neck::NeckVariant::kEpaFpn);
  EXPECT_EQ(ArchConfig::preset("full").bottleneck, BottleneckKind::kMsDdsp);
  EXPECT_FALSE(ArchConfig::preset("full-b2").branch_enabled[1]);
  EXPECT_TRUE(ArchConfig::preset("full-b2").branch_enabled[2]);
  EXPECT_THROW(ArchConfig::preset("full-b5"), ConfigError);
  EXPECT_THROW(ArchConfig::preset("fancy"), ConfigError);
  EXPECT_THROW(ArchConfig::from_json({{"neck", "bifpn"}}), ConfigError);
  EXPECT_THROW(ArchConfig::from_json({{"bottleneck", "c3"}}), ConfigError);
}

TEST(Detector, HeadInputShapesAgreeAcrossNecks) {
  std::map<int, Shape> reference;
  for (auto variant : {neck::NeckVariant::kTopDownFpn, neck::NeckVariant::kPanet,
                       neck::NeckVariant::kEpaFpn}) {
    ArchConfig a;
    a.neck = variant;
    const auto shapes = Detector::create(a, 1).head_input_shapes(2);
    ASSERT_EQ(shapes.size(), 3u);
    EXPECT_EQ(shapes.at(3), (Shape{2, 32, 12, 12}));
    EXPECT_EQ(shapes.at(4), (Shape{2, 32, 6, 6}));
    EXPECT_EQ(shapes.at(5), (Shape{2, 32, 3, 3}));
    if (reference.empty()) reference = shapes;
    EXPECT_EQ(shapes, reference);
  }
}

TEST(Detector, BottleneckDoesNotChangeHeadInputs) {
  EXPECT_EQ(Detector::create(ArchConfig::preset("msddsp"), 1).head_input_shapes(),
            Detector::create(ArchConfig::preset("baseline"), 1).head_input_shapes());
}

TEST(Detector, RejectsWrongInputSize) {
  const Detector d = Detector::create(ArchConfig::preset("baseline"), 1);
  EXPECT_THROW(d.forward(Tensor(Shape{1, 3, 64, 64})), DimensionError);
  EXPECT_THROW(d.forward(Tensor(Shape{1, 1, 96, 96})), DimensionError);
}

TEST(Detector, UntrainedPredictionsAreValid) {
  Rng rng(5);
  const Tensor images = rng.uniform_tensor(Shape{2, 3, 96, 96}, 0, 1);
  for (const char* name : {"baseline", "full"}) {
    const Detector d = Detector::create(ArchConfig::preset(name), 9);
    for (double thr : {0.99, 0.001}) {
      const auto out = d.predict(images, thr);
      ASSERT_EQ(out.size(), 2u);
      for (const auto& img : out) {
        EXPECT_LE(img.size(), 100u);
        for (const DetectionBox& b : img) {
          EXPECT_NO_THROW(b.validate());
          EXPECT_GE(b.score, thr);
          EXPECT_LE(b.score, 1.0);
          EXPECT_GE(b.x1, 0.0);
          EXPECT_LE(b.x2, 96.0);
        }
      }
    }
  }
}

TEST(Detector, ObjectnessPriorSetsInitialScores) {
  const Detector d = Detector::create(ArchConfig::preset("baseline"), 2);
  const Tensor zeros(Shape{1, 3, 96, 96});
  // Untrained scores stay near sigmoid(prior) ~ 0.01 on average.
  for (const auto& [l, h] : d.forward(zeros)) {
    double mean = 0.0;
    const std::size_t cells = h.shape().h * h.shape().w;
    for (std::size_t i = 0; i < cells; ++i) mean += 1.0 / (1.0 + std::exp(-h[i]));
    EXPECT_LT(mean / static_cast<double>(cells), 0.1) << l;
  }
}

TEST(Decode, RecoversEncodedTarget) {
  // Encode a box through build_targets, invert the head transform, decode.
  const std::vector<std::vector<uw::SceneBox>> boxes{{{30.0, 20.0, 48.0, 30.0, 0}}};
  const std::map<int, Shape> shapes{{3, {1, 5, 12, 12}}, {4, {1, 5, 6, 6}}, {5, {1, 5, 3, 3}}};
  const Targets t = build_targets(boxes, shapes, 96);
  ASSERT_EQ(t.positives, 1u);
  std::map<int, Tensor> head;
  for (const auto& [l, s] : shapes) head[l] = Tensor(s, -20.0);
  const int level = assign_level(18.0);
  const Tensor& obj = t.objectness.at(level);
  const Tensor& tb = t.box.at(level);
  for (std::size_t y = 0; y < obj.shape().h; ++y) {
    for (std::size_t x = 0; x < obj.shape().w; ++x) {
      if (obj.at(0, 0, y, x) == 0.0) continue;
      Tensor& h = head[level];
      h.at(0, 0, y, x) = 5.0;
      h.at(0, 1, y, x) = std::log(tb.at(0, 0, y, x) / (1 - tb.at(0, 0, y, x)));
      h.at(0, 2, y, x) = std::log(tb.at(0, 1, y, x) / (1 - tb.at(0, 1, y, x)));
      h.at(0, 3, y, x) = tb.at(0, 2, y, x);
      h.at(0, 4, y, x) = tb.at(0, 3, y, x);
    }
  }
  const auto out = decode(head, 0, 96, 0.5);
  ASSERT_EQ(out.size(), 1u);
  EXPECT_NEAR(out[0].x1, 30.0, 1e-9);
  EXPECT_NEAR(out[0].y1, 20.0, 1e-9);
  EXPECT_NEAR(out[0].x2, 48.0, 1e-9);
  EXPECT_NEAR(out[0].y2, 30.0, 1e-9);
}

TEST(Targets, LevelAssignmentAndCellOwnership) {
  EXPECT_EQ(assign_level(16.0), 3);
  EXPECT_EQ(assign_level(30.0), 4);
  EXPECT_EQ(assign_level(70.0), 5);
  const std::map<int, Shape> shapes{{3, {1, 5, 12, 12}}, {4, {1, 5, 6, 6}}, {5, {1, 5, 3, 3}}};
  // Two small boxes with the same center cell: the first listed wins.
  const Targets t = build_targets({{{10, 10, 20, 20, 0}, {10, 12, 20, 18, 0}}}, shapes, 96);
  EXPECT_EQ(t.positives, 1u);
  EXPECT_DOUBLE_EQ(t.objectness.at(3).at(0, 0, 1, 1), 1.0);
  EXPECT_DOUBLE_EQ(t.box.at(3).at(0, 0, 1, 1), 15.0 / 8.0 - 1.0);
  EXPECT_DOUBLE_EQ(t.box.at(3).at(0, 2, 1, 1), std::log(10.0 / 8.0));
  EXPECT_THROW(build_targets({{{5, 5, 5, 9, 0}}}, shapes, 96), ValueError);
  EXPECT_THROW(build_targets({{}, {}}, shapes, 96), DimensionError);
}

TEST(Loss, HandComputedSingleCell) {
  Tape t;
  Tensor h(Shape{1, 5, 1, 1});
  h[0] = 0.0;
  h[1] = 0.0;   // sigmoid 0.5
  h[2] = 0.0;
  h[3] = 1.0;
  h[4] = -1.0;
  const Var hv = t.input(h);
  Targets tg;
  tg.objectness[3] = Tensor(Shape{1, 1, 1, 1}, 1.0);
  tg.box[3] = Tensor(Shape{1, 4, 1, 1});
  tg.box[3][0] = 0.25;
  tg.box[3][1] = 0.75;
  tg.box[3][2] = 0.5;
  tg.box[3][3] = 0.0;
  const Var loss = detection_loss(t, {{3, hv}}, tg, {2.0, 3.0});
  const double expected = 2.0 * std::log(2.0) + 3.0 * (0.25 + 0.25 + 0.5 + 1.0);
  EXPECT_NEAR(t.value(loss)[0], expected, 1e-14);
  t.backward(loss);
  const Tensor g = t.grad(hv);
  EXPECT_NEAR(g[0], 2.0 * (0.5 - 1.0), 1e-14);
  EXPECT_NEAR(g[1], 3.0 * 0.25, 1e-14);
  EXPECT_NEAR(g[2], -3.0 * 0.25, 1e-14);
  EXPECT_NEAR(g[3], 3.0, 1e-14);
  EXPECT_NEAR(g[4], -3.0, 1e-14);
}

// Loss of a tiny detector on one image as a function of one parameter.
double loss_at(const Detector& d, const Tensor& image, const std::vector<uw::SceneBox>& boxes) {
  Tape t(false);
  const auto head = d(t, t.constant(image));
  std::map<int, Shape> shapes;
  for (const auto& [l, v] : head) shapes[l] = t.value(v).shape();
  return t.value(detection_loss(t, head, build_targets({boxes}, shapes, d.arch().input_size)))[0];
}

class EndToEndGrad : public ::testing::TestWithParam<const char*> {};

TEST_P(EndToEndGrad, SampledParametersMatchFiniteDifferences) {
  Detector d = Detector::create(tiny(GetParam()), 21);
  Rng rng(8);
  const Tensor image = rng.uniform_tensor(Shape{1, 3, 64, 64}, 0, 1);
  const std::vector<uw::SceneBox> boxes{{4, 6, 18, 14, 0}, {20, 30, 52, 50, 0}, {40, 2, 62, 20, 0}};

  d.params().zero_grad();
  {
    Tape t;
    const auto head = d(t, t.constant(image));
    std::map<int, Shape> shapes;
    for (const auto& [l, v] : head) shapes[l] = t.value(v).shape();
    t.backward(detection_loss(t, head, build_targets({boxes}, shapes, 64)));
  }

  // Every parameter tensor contributes at least one sample; ~1% overall.
  std::size_t sampled = 0;
  double worst = 0.0;
  for (Parameter& p : d.params()) {
    const std::size_t n = std::max<std::size_t>(1, p.value.numel() / 100);
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < n; ++k) {
      idx.push_back(static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(p.value.numel()) - 1)));
    }
    Tensor& value = p.value;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& probe) {
          const Tensor saved = value;
          value = probe;
          const double l = loss_at(d, image, boxes);
          value = saved;
          return l;
        },
        value, 1e-5, idx);
    const double err = relative_error(p.grad, numeric, idx, 1e-6);
    worst = std::max(worst, err);
    EXPECT_LE(err, 1e-3) << p.name;
    sampled += idx.size();
  }
  EXPECT_GE(sampled * 100, d.param_count());
  RecordProperty("worst_relative_error", std::to_string(worst));
}

INSTANTIATE_TEST_SUITE_P(Arch, EndToEndGrad, ::testing::Values("baseline", "full"));

// ---- training ----

uw::Dataset small_dataset(std::size_t count) {
  uw::DatasetSpec spec;
  spec.count = count;
  spec.seed = 11;
  return uw::generate_dataset(spec);
}

TEST(Train, LossDropsAfterFirstEpoch) {
  const uw::Dataset ds = small_dataset(64);
  Detector d = Detector::create(ArchConfig::preset("baseline"), 4);
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 4;
  const TrainResult r = train(d, ds, cfg);
  ASSERT_EQ(r.log.size(), 1u);
  const double after = dataset_loss(d, ds.split("train"), cfg);
  EXPECT_LT(after, r.initial_loss);
  EXPECT_LT(r.log[0].loss, r.initial_loss);
}

TEST(Train, DeterministicPerSeed) {
  const uw::Dataset ds = small_dataset(40);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 9;
  Detector a = Detector::create(ArchConfig::preset("full"), 9);
  Detector b = Detector::create(ArchConfig::preset("full"), 9);
  const TrainResult ra = train(a, ds, cfg);
  const TrainResult rb = train(b, ds, cfg);
  EXPECT_EQ(ra.log_csv(), rb.log_csv());
  auto pa = a.params().begin();
  for (const Parameter& p : b.params()) {
    EXPECT_TRUE(std::ranges::equal(p.value.data(), pa->value.data())) << p.name;
    ++pa;
  }
  EXPECT_EQ(evaluate(a, ds.split("test")).map50, evaluate(b, ds.split("test")).map50);
}

TEST(Train, LogCsvColumns) {
  TrainResult r;
  r.log.push_back({1, 2.5, 0.25, 0.01});
  EXPECT_EQ(r.log_csv(), "epoch,loss,val_mAP50,lr\n1,2.5,0.25,0.01\n");
}

TEST(Checkpoint, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "finsight_ckpt_test";
  std::filesystem::create_directories(dir);
  const Detector d = Detector::create(ArchConfig::preset("full-b3"), 17);
  save_checkpoint(d, dir / "model");
  const Detector back = load_checkpoint(dir / "model");
  EXPECT_EQ(back.arch().to_json(), d.arch().to_json());
  Rng rng(1);
  const Tensor img = rng.uniform_tensor(Shape{1, 3, 96, 96}, 0, 1);
  const auto ya = d.forward(img), yb = back.forward(img);
  for (const auto& [l, t] : ya) EXPECT_TRUE(std::ranges::equal(t.data(), yb.at(l).data()));
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, MissingFileIsParseError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/finsight/model"), ParseError);
}

}  // namespace
}  // namespace finsight::det
