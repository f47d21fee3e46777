// Copyright 2026 The FinSight Authors
// SPDX-License-Identifier: Apache-2.0

#include "finsight/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <tuple>

#include "finsight/errors.hpp"

namespace finsight::det {

namespace {

std::string describe(const DetectionBox& b) {
  return "[" + std::to_string(b.x1) + ", " + std::to_string(b.y1) + ", " +
         std::to_string(b.x2) + ", " + std::to_string(b.y2) + "]";
}

auto coords(const DetectionBox& b) { return std::tie(b.x1, b.y1, b.x2, b.y2); }

}  // namespace

void DetectionBox::validate() const {
  if (!std::isfinite(x1) || !std::isfinite(y1) || !std::isfinite(x2) ||
      !std::isfinite(y2) || !std::isfinite(score)) {
    throw ValueError("box has a non-finite field");
  }
  if (!(x1 < x2 && y1 < y2)) throw ValueError("degenerate box " + describe(*this));
}

double iou(const DetectionBox& a, const DetectionBox& b) {
  a.validate();
  b.validate();
  const double iw = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double ih = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

std::vector<DetectionBox> nms(const std::vector<DetectionBox>& boxes,
                              double iou_threshold) {
  for (const DetectionBox& b : boxes) {
    if (!std::isfinite(b.score)) throw ValueError("nms: non-finite score");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return boxes[i].score > boxes[j].score;
  });
  std::vector<DetectionBox> kept;
  for (std::size_t i : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const DetectionBox& k) {
      return iou(k, boxes[i]) >= iou_threshold;
    });
    if (!suppressed) kept.push_back(boxes[i]);
  }
  return kept;
}

double f1_score(double precision, double recall) {
  const double s = precision + recall;
  return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

nlohmann::json EvalResult::to_json(bool with_matches) const {
  nlohmann::json j = {{"precision", precision},
                      {"recall", recall},
                      {"f1", f1},
                      {"map50", map50},
                      {"true_positives", true_positives},
                      {"false_positives", false_positives},
                      {"num_gt", num_gt}};
  if (with_matches) {
    nlohmann::json m = nlohmann::json::array();
    for (const MatchRecord& r : matches) {
      m.push_back({{"image", r.image}, {"pred", r.pred}, {"gt", r.gt},
                   {"iou", r.iou}, {"score", r.score}});
    }
    j["matches"] = std::move(m);
  }
  return j;
}

EvalResult evaluate_map(const std::vector<std::vector<DetectionBox>>& preds,
                        const std::vector<std::vector<DetectionBox>>& gts,
                        double iou_threshold) {
  if (preds.size() != gts.size()) {
    throw DimensionError("evaluate_map: " + std::to_string(preds.size()) +
                         " prediction lists vs " + std::to_string(gts.size()) + " images");
  }
  EvalResult r;
  for (const auto& g : gts) {
    for (const DetectionBox& b : g) b.validate();
    r.num_gt += g.size();
  }

  // Per image: rank by score, equal scores by coordinates; match greedily.
  std::vector<MatchRecord> records;
  for (std::size_t img = 0; img < preds.size(); ++img) {
    const auto& p = preds[img];
    for (const DetectionBox& b : p) b.validate();
    std::vector<std::size_t> order(p.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
      if (p[i].score != p[j].score) return p[i].score > p[j].score;
      return coords(p[i]) < coords(p[j]);
    });
    std::vector<bool> taken(gts[img].size(), false);
    for (std::size_t i : order) {
      MatchRecord m{img, i, -1, 0.0, p[i].score};
      for (std::size_t g = 0; g < gts[img].size(); ++g) {
        if (taken[g]) continue;
        const double v = iou(p[i], gts[img][g]);
        if (v < iou_threshold) continue;
        const bool better = m.gt < 0 || v > m.iou ||
                            (v == m.iou && coords(gts[img][g]) <
                                               coords(gts[img][static_cast<std::size_t>(m.gt)]));
        if (better) {
          m.gt = static_cast<int>(g);
          m.iou = v;
        }
      }
      if (m.gt >= 0) taken[static_cast<std::size_t>(m.gt)] = true;
      records.push_back(m);
    }
  }

  std::stable_sort(records.begin(), records.end(),
                   [](const MatchRecord& a, const MatchRecord& b) { return a.score > b.score; });

  // Precision/recall after each distinct score level.
  std::vector<double> prec, rec;
  std::size_t tp = 0, fp = 0;
  for (std::size_t k = 0; k < records.size(); ++k) {
    (records[k].gt >= 0 ? tp : fp) += 1;
    const bool level_end = k + 1 == records.size() || records[k + 1].score != records[k].score;
    if (!level_end) continue;
    prec.push_back(static_cast<double>(tp) / static_cast<double>(tp + fp));
    rec.push_back(r.num_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(r.num_gt));
  }
  r.true_positives = tp;
  r.false_positives = fp;
  r.precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = r.num_gt == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(r.num_gt);
  r.f1 = f1_score(r.precision, r.recall);

  // Envelope: precision at recall r is the best precision at any recall >= r.
  for (std::size_t k = prec.size(); k-- > 1;) prec[k - 1] = std::max(prec[k - 1], prec[k]);
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t k = 0; k < prec.size(); ++k) {
    ap += (rec[k] - prev_recall) * prec[k];
    prev_recall = rec[k];
  }
  r.map50 = ap;
  r.matches = std::move(records);
  return r;
}

}  // namespace finsight::det
