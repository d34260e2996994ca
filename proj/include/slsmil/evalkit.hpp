#pragma once

// Detection-to-ground-truth matching, recall / precision / F1, average
// precision over a score sweep, and the folded direction error.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "slsmil/geom.hpp"
#include "slsmil/postproc.hpp"

namespace slsmil {

struct MatchResult {
  std::size_t tp = 0, fn = 0, fp = 0;
  std::vector<bool> gt_matched;
  std::vector<bool> det_matched;              // indexed like the input detections
  std::vector<std::optional<std::size_t>> det_gt;  // matched gt index per detection
};

/// Detections are visited by descending score (ties by input order); each
/// takes the unmatched gt box of highest IoU at or above the threshold.
/// Unmatched detections are false positives, unmatched boxes false negatives.
inline MatchResult match_detections(const std::vector<Detection>& dets, const std::vector<Aabb>& gts,
                                    double iou_threshold = 0.4) {
  MatchResult r;
  r.gt_matched.assign(gts.size(), false);
  r.det_matched.assign(dets.size(), false);
  r.det_gt.assign(dets.size(), std::nullopt);
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  for (std::size_t d : order) {
    double best = -1.0;
    std::optional<std::size_t> best_g;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double v = iou(dets[d].square, gts[g]);
      if (v >= iou_threshold && v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g) {
      r.gt_matched[*best_g] = true;
      r.det_matched[d] = true;
      r.det_gt[d] = best_g;
      ++r.tp;
    } else {
      ++r.fp;
    }
  }
  r.fn = gts.size() - r.tp;
  return r;
}

struct Prf {
  std::optional<double> recall, precision, f1;
};

/// Undefined ratios (zero denominators) are left empty.
inline Prf prf(std::size_t tp, std::size_t fn, std::size_t fp) {
  Prf m;
  if (tp + fn > 0) m.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (tp + fp > 0) m.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  if (m.recall && m.precision) {
    const double s = *m.recall + *m.precision;
    m.f1 = s > 0.0 ? 2.0 * *m.recall * *m.precision / s : 0.0;
  }
  return m;
}

struct PrPoint {
  double threshold = 0.0;
  double recall = 0.0;
  double precision = 0.0;
};

struct PrCurve {
  std::vector<PrPoint> points;  // one per distinct score, descending threshold
  double ap = 0.0;
};

/// Sweep the decision threshold over every distinct score. `correct[i]`
/// flags detection i as a true positive under the matching rule. AP is the
/// area under the all-points precision envelope.
inline PrCurve pr_curve(const std::vector<double>& scores, const std::vector<bool>& correct, std::size_t gt_count) {
  if (scores.size() != correct.size()) throw Error(ErrorCode::InvalidArgument, "score/flag size mismatch");
  PrCurve c;
  if (gt_count == 0) return c;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::size_t tp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (correct[order[i]]) ++tp;
    if (i + 1 < order.size() && scores[order[i + 1]] == scores[order[i]]) continue;
    c.points.push_back({scores[order[i]], static_cast<double>(tp) / static_cast<double>(gt_count),
                        static_cast<double>(tp) / static_cast<double>(i + 1)});
  }
  double envelope = 0.0;
  double area = 0.0;
  for (std::size_t i = c.points.size(); i-- > 0;) {
    envelope = std::max(envelope, c.points[i].precision);
    const double prev_recall = i > 0 ? c.points[i - 1].recall : 0.0;
    area += (c.points[i].recall - prev_recall) * envelope;
  }
  c.ap = std::clamp(area, 0.0, 1.0);
  return c;
}

/// Single-image convenience: match, then sweep.
inline PrCurve average_precision(const std::vector<Detection>& dets, const std::vector<Aabb>& gts,
                                 double iou_threshold = 0.4) {
  const MatchResult m = match_detections(dets, gts, iou_threshold);
  std::vector<double> scores;
  for (const auto& d : dets) scores.push_back(d.score);
  return pr_curve(scores, m.det_matched, gts.size());
}

/// Angle between an estimated axis and the true axis in degrees, folded to
/// [0, 90] because the axis is treated as undirected.
inline double direction_error(double estimated, double true_axis) {
  const double d = std::abs(normalize_angle(estimated - true_axis));  // [0, pi]
  const double folded = std::min(d, kPi - d);
  return std::clamp(folded * 180.0 / kPi, 0.0, 90.0);
}

inline double direction_error(const Detection& det, double true_axis) {
  return direction_error(det.direction, true_axis);
}

}  // namespace slsmil
