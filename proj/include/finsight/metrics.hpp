// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

// Box overlap, non-maximum suppression and detection metrics.

#ifndef FINSIGHT_METRICS_HPP_
#define FINSIGHT_METRICS_HPP_

#include <cstddef>
#include <vector>

#include "json.hpp"

namespace finsight::det {

struct DetectionBox {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double score = 1.0;
  int class_id = 0;

  // ValueError unless x1 < x2, y1 < y2 and all fields are finite.
  void validate() const;
  double area() const { return (x2 - x1) * (y2 - y1); }
  bool operator==(const DetectionBox&) const = default;
};

// Intersection over union. ValueError on a degenerate box.
double iou(const DetectionBox& a, const DetectionBox& b);

// Greedy suppression in descending score order, ties by input index.
// A box whose IoU with a kept box is >= iou_threshold is dropped.
std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold);

struct MatchRecord {
  std::size_t image = 0;
  std::size_t pred = 0;  // index into that image's predictions
  int gt = -1;           // matched ground truth, -1 for a false positive
  double iou = 0.0;
  double score = 0.0;
};

struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double map50 = 0.0;
  std::size_t true_positives = 0;
  std::size_t false_positives = 0;
  std::size_t num_gt = 0;
  std::vector<MatchRecord> matches;

  nlohmann::json to_json(bool with_matches = false) const;
};

// 2PR / (P + R), or 0 when P + R = 0.
double f1_score(double precision, double recall);

/// Single-class AP at one IoU threshold.
///
/// Predictions from all images are ranked by score. Within an image,
/// predictions are matched greedily in rank order to the unmatched ground
/// truth of highest IoU (at least iou_threshold). Equal scores within an
/// image are ordered by box coordinates, so the result does not depend on
/// input order, and precision/recall points are taken only after each
/// distinct score level. AP integrates the monotone precision envelope over
/// recall (all points). P and R are those of the full ranked list.
EvalResult evaluate_map(const std::vector<std::vector<DetectionBox>>& preds,
                        const std::vector<std::vector<DetectionBox>>& gts,
                        double iou_threshold = 0.5);

}  // namespace finsight::det

#endif  // FINSIGHT_METRICS_HPP_
