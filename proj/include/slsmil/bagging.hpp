#pragma once

// Patch cropping, IoU labelling of proposals against ground truth, positive
// bag assembly and image-level fold assignment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "slsmil/annotations.hpp"
#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"
#include "slsmil/image.hpp"
#include "slsmil/sls.hpp"

namespace slsmil {

/// Planar (channel-major) square patch.
struct Patch {
  int size = 0;
  int channels = 0;
  std::vector<float> data;

  Patch() = default;
  Patch(int s, int c) : size(s), channels(c), data(static_cast<std::size_t>(s) * s * c, 0.0f) {}

  float& at(int c, int x, int y) { return data[(static_cast<std::size_t>(c) * size + y) * size + x]; }
  float at(int c, int x, int y) const { return data[(static_cast<std::size_t>(c) * size + y) * size + x]; }
};

namespace detail {

// Equivalent angles (theta, theta + 2 pi, ...) differ in their last bits after
// normalisation; snapping to a 2^-40 rad grid makes their crops identical.
inline double snap_angle(double theta) {
  constexpr double kGrid = 1099511627776.0;  // 2^40
  return std::nearbyint(normalize_angle(theta) * kGrid) / kGrid;
}

struct CropFrame {
  Point2 origin;
  Point2 ex, ey;  // image-space step per unit of patch x / y
};

// The patch's upward direction (-y) maps to the square's axis direction, so
// the symmetry axis is vertical in the patch.
inline CropFrame crop_frame(const OrientedSquare& sq) {
  const double phi = snap_angle(sq.theta) + 0.5 * kPi;
  const double c = std::cos(phi), s = std::sin(phi);
  return {sq.center, {c, s}, {-s, c}};
}

}  // namespace detail

/// Sample the rotated square into an out_size x out_size patch with bilinear
/// interpolation. Out-of-image samples are zero.
inline Patch crop_patch(const ColorImage& img, const OrientedSquare& sq, int out_size = 128) {
  if (out_size < 8) throw Error(ErrorCode::InvalidArgument, "patch size must be >= 8");
  if (sq.center.x < 0.0 || sq.center.y < 0.0 || sq.center.x >= img.width() || sq.center.y >= img.height())
    throw Error(ErrorCode::CenterOutsideImage, "crop centre lies outside the image");
  const auto f = detail::crop_frame(sq);
  Patch p(out_size, img.channel_count());
  for (int v = 0; v < out_size; ++v)
    for (int u = 0; u < out_size; ++u) {
      const double px = ((u + 0.5) / out_size - 0.5) * sq.side;
      const double py = ((v + 0.5) / out_size - 0.5) * sq.side;
      const double x = f.origin.x + px * f.ex.x + py * f.ey.x;
      const double y = f.origin.y + px * f.ex.y + py * f.ey.y;
      for (int c = 0; c < p.channels; ++c)
        p.at(c, u, v) = static_cast<float>(sample_bilinear(img.channels[c], x, y));
    }
  return p;
}

/// Box-filter downsample by an integer factor.
inline Patch downsample_patch(const Patch& in, int out_size) {
  if (out_size <= 0 || in.size % out_size != 0)
    throw Error(ErrorCode::InvalidArgument, "patch size must be a multiple of the output size");
  const int f = in.size / out_size;
  Patch out(out_size, in.channels);
  const double inv = 1.0 / (f * f);
  for (int c = 0; c < in.channels; ++c)
    for (int y = 0; y < out_size; ++y)
      for (int x = 0; x < out_size; ++x) {
        double acc = 0.0;
        for (int j = 0; j < f; ++j)
          for (int i = 0; i < f; ++i) acc += in.at(c, x * f + i, y * f + j);
        out.at(c, x, y) = static_cast<float>(acc * inv);
      }
  return out;
}

/// Same result as downsample_patch(crop_patch(img, sq, crop_size), out_size)
/// without materialising the full-resolution crop.
inline Patch crop_patch_downsampled(const ColorImage& img, const OrientedSquare& sq, int crop_size,
                                    int out_size) {
  if (crop_size < 8) throw Error(ErrorCode::InvalidArgument, "patch size must be >= 8");
  if (out_size <= 0 || crop_size % out_size != 0)
    throw Error(ErrorCode::InvalidArgument, "crop size must be a multiple of the output size");
  if (sq.center.x < 0.0 || sq.center.y < 0.0 || sq.center.x >= img.width() || sq.center.y >= img.height())
    throw Error(ErrorCode::CenterOutsideImage, "crop centre lies outside the image");
  const auto fr = detail::crop_frame(sq);
  const int f = crop_size / out_size;
  const double inv = 1.0 / (f * f);
  Patch p(out_size, img.channel_count());
  std::vector<double> acc(static_cast<std::size_t>(p.channels));
  for (int y = 0; y < out_size; ++y)
    for (int x = 0; x < out_size; ++x) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int j = 0; j < f; ++j)
        for (int i = 0; i < f; ++i) {
          const int u = x * f + i, v = y * f + j;
          const double px = ((u + 0.5) / crop_size - 0.5) * sq.side;
          const double py = ((v + 0.5) / crop_size - 0.5) * sq.side;
          const double ix = fr.origin.x + px * fr.ex.x + py * fr.ey.x;
          const double iy = fr.origin.y + px * fr.ex.y + py * fr.ey.y;
          for (int c = 0; c < p.channels; ++c)
            acc[c] += static_cast<float>(sample_bilinear(img.channels[c], ix, iy));
        }
      for (int c = 0; c < p.channels; ++c) p.at(c, x, y) = static_cast<float>(acc[c] * inv);
    }
  return p;
}

enum class Label : int { Indeterminate = -1, Negative = 0, Positive = 1 };

struct LabelParams {
  double positive_iou = 0.4;  // label +1 at or above
  double negative_iou = 0.2;  // label 0 strictly below

  void validate() const {
    if (!(negative_iou > 0.0 && negative_iou <= positive_iou && positive_iou <= 1.0))
      throw Error(ErrorCode::InvalidArgument, "label thresholds must satisfy 0 < neg <= pos <= 1");
  }
};

inline Label label_for_iou(double best_iou, const LabelParams& params = {}) {
  if (best_iou >= params.positive_iou) return Label::Positive;
  if (best_iou < params.negative_iou) return Label::Negative;
  return Label::Indeterminate;
}

struct LabeledInstance {
  SlsProposal proposal;
  Patch patch;
  Label label = Label::Negative;
  double best_iou = 0.0;
  std::optional<std::size_t> gt_index;  // present iff label is Positive
};

/// Positive instances that share one ground-truth box. `members` index into
/// the instance list the bag was built from.
struct PositiveBag {
  std::size_t gt_index = 0;
  std::vector<std::size_t> members;
};

struct LabelingResult {
  std::vector<LabeledInstance> instances;
  std::vector<PositiveBag> bags;       // ordered by gt index
  std::vector<std::size_t> negatives;  // label 0 instances
};

/// Label every proposal by its best IoU against the ground-truth boxes
/// (ties go to the lowest box index) and group positives into bags.
inline LabelingResult label_proposals(const std::vector<SlsProposal>& proposals, const GroundTruth& gt,
                                      const LabelParams& params = {}) {
  params.validate();
  LabelingResult r;
  r.instances.reserve(proposals.size());
  std::vector<std::vector<std::size_t>> per_gt(gt.boxes.size());
  for (std::size_t i = 0; i < proposals.size(); ++i) {
    LabeledInstance inst;
    inst.proposal = proposals[i];
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < gt.boxes.size(); ++k) {
      const double v = iou(proposals[i].square, gt.boxes[k]);
      if (v > inst.best_iou) {
        inst.best_iou = v;
        best_k = k;
      }
    }
    inst.label = label_for_iou(inst.best_iou, params);
    if (inst.label == Label::Positive) {
      inst.gt_index = best_k;
      per_gt[best_k].push_back(i);
    } else if (inst.label == Label::Negative) {
      r.negatives.push_back(i);
    }
    r.instances.push_back(std::move(inst));
  }
  for (std::size_t k = 0; k < per_gt.size(); ++k)
    if (!per_gt[k].empty()) r.bags.push_back({k, std::move(per_gt[k])});
  return r;
}

struct FoldSplit {
  int k = 0;
  std::map<std::string, int> assignment;

  int fold_of(const std::string& image_id) const {
    const auto it = assignment.find(image_id);
    if (it == assignment.end()) throw Error(ErrorCode::InvalidArgument, "image not in fold split: " + image_id);
    return it->second;
  }

  std::vector<std::string> images_in(int fold) const {
    std::vector<std::string> out;
    for (const auto& [id, f] : assignment)
      if (f == fold) out.push_back(id);
    return out;
  }
};

/// Seeded shuffle of the image ids, then round-robin assignment; fold sizes
/// differ by at most one.
inline FoldSplit split_folds(const std::vector<std::string>& image_ids, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "fold count must be >= 2");
  if (image_ids.size() < static_cast<std::size_t>(k))
    throw Error(ErrorCode::TooFewImages, "need at least as many images as folds");
  std::vector<std::string> ids = image_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw Error(ErrorCode::InvalidArgument, "duplicate image id in fold split");
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(ids[i - 1], ids[j]);
  }
  FoldSplit split;
  split.k = k;
  for (std::size_t i = 0; i < ids.size(); ++i) split.assignment[ids[i]] = static_cast<int>(i % k);
  return split;
}

}  // namespace slsmil
