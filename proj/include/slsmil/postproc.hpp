#pragma once

// Scoring proposals with a frozen model and greedy non-maximum suppression
// over oriented squares.

#include <algorithm>
#include <numeric>
#include <string>
#include <vector>

#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"
#include "slsmil/milnet.hpp"

namespace slsmil {

struct Detection {
  OrientedSquare square;
  double score = 0.0;
  std::string image_id;
  double direction = 0.0;  // estimated fuselage axis, equal to square.theta
};

struct ScoredSquare {
  OrientedSquare square;
  double score = 0.0;
};

/// One probability per model input, order preserved.
inline std::vector<double> score_inputs(const ScorerModel& model,
                                        const std::vector<std::vector<double>>& inputs) {
  std::vector<double> out;
  out.reserve(inputs.size());
  Tape tape;
  for (const auto& x : inputs) out.push_back(model.forward(x, tape));
  return out;
}

struct NmsParams {
  double iou_threshold = 0.4;
  double score_threshold = 0.5;

  void validate() const {
    if (!(iou_threshold > 0.0 && iou_threshold < 1.0) || !(score_threshold > 0.0 && score_threshold < 1.0))
      throw Error(ErrorCode::InvalidArgument, "NMS thresholds must lie in (0, 1)");
  }
};

/// Indices of the candidates kept by greedy NMS, in descending score order
/// (ties by input order). Candidates below the score threshold are dropped
/// first; a kept candidate removes every survivor with IoU above the
/// overlap threshold.
inline std::vector<std::size_t> nms_indices(const std::vector<ScoredSquare>& cands, const NmsParams& params = {}) {
  params.validate();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < cands.size(); ++i)
    if (cands[i].score >= params.score_threshold) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return cands[a].score > cands[b].score; });
  std::vector<std::size_t> kept;
  std::vector<bool> removed(order.size(), false);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (removed[i]) continue;
    const auto& best = cands[order[i]].square;
    kept.push_back(order[i]);
    for (std::size_t j = i + 1; j < order.size(); ++j)
      if (!removed[j] && iou(best, cands[order[j]].square) > params.iou_threshold) removed[j] = true;
  }
  return kept;
}

inline std::vector<Detection> nms(const std::vector<ScoredSquare>& cands, const NmsParams& params = {},
                                  const std::string& image_id = {}) {
  std::vector<Detection> out;
  for (std::size_t i : nms_indices(cands, params))
    out.push_back({cands[i].square, cands[i].score, image_id, cands[i].square.theta});
  return out;
}

}  // namespace slsmil
