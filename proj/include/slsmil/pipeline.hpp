#pragma once

// Glue between the stages: dataset loading, per-image proposal extraction
// and patch cropping, training-set assembly, model training and detection.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "slsmil/annotations.hpp"
#include "slsmil/bagging.hpp"
#include "slsmil/config.hpp"
#include "slsmil/linedet.hpp"
#include "slsmil/milnet.hpp"
#include "slsmil/postproc.hpp"
#include "slsmil/raster_io.hpp"
#include "slsmil/sls.hpp"
#include "slsmil/synthgen.hpp"

namespace slsmil {

/// Run fn(i) for i in [0, n) on up to `jobs` threads. Results must be
/// written to per-index slots so the outcome is independent of scheduling.
/// The first exception (lowest index) is rethrown.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Zero-mean, unit-variance model input from a patch (flat CHW order).
inline std::vector<double> patch_to_input(const Patch& p) {
  std::vector<double> x(p.data.begin(), p.data.end());
  if (x.empty()) return x;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double scale = 1.0 / std::sqrt(var / static_cast<double>(x.size()) + 1e-4);
  for (double& v : x) v = (v - mean) * scale;
  return x;
}

inline std::vector<SlsProposal> propose(const ColorImage& img, const PipelineConfig& cfg) {
  const auto segments = detect_all_channels(img, cfg.detector);
  return generate_proposals(split_by_channel(segments, img.channel_count()), cfg.pairing);
}

/// Downsampled patch for one proposal. A square whose centre falls outside
/// the image yields an all-zero patch.
inline Patch proposal_patch(const ColorImage& img, const SlsProposal& p, const PipelineConfig& cfg) {
  const Point2 c = p.square.center;
  if (c.x < 0.0 || c.y < 0.0 || c.x >= img.width() || c.y >= img.height())
    return Patch(cfg.input_size, img.channel_count());
  return crop_patch_downsampled(img, p.square, cfg.crop_size, cfg.input_size);
}

struct DatasetImage {
  std::string id;
  std::filesystem::path image_path;
  ColorImage image;
  GroundTruth gt;
  std::vector<AxisRecord> axes;  // empty when no sidecar exists
};

/// Load a dataset directory laid out as images/<id>.{png,pgm,ppm},
/// ground_truth/<id>.txt and optionally axes/<id>.txt. Images are ordered
/// by id.
inline std::vector<DatasetImage> load_dataset(const std::filesystem::path& root, bool require_gt = true) {
  namespace fs = std::filesystem;
  const fs::path images = root / "images";
  if (!fs::is_directory(images)) throw Error(ErrorCode::IoFailure, "missing directory " + images.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images))
    if (e.is_regular_file() && is_raster_path(e.path())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<DatasetImage> out;
  for (const auto& f : files) {
    DatasetImage d;
    d.id = f.stem().string();
    d.image_path = f;
    d.image = read_image(f);
    const fs::path gt = root / "ground_truth" / (d.id + ".txt");
    if (fs::exists(gt))
      d.gt = read_annotations(gt, d.id);
    else if (require_gt)
      throw Error(ErrorCode::IoFailure, "missing ground truth " + gt.string());
    else
      d.gt.image_id = d.id;
    const fs::path axes = root / "axes" / (d.id + ".txt");
    if (fs::exists(axes)) d.axes = read_axis_sidecar(axes);
    out.push_back(std::move(d));
  }
  return out;
}

/// Proposals of one image with their labels and downsampled patches.
struct PreparedImage {
  std::string id;
  GroundTruth gt;
  std::vector<AxisRecord> axes;
  LabelingResult labeling;
};

inline PreparedImage prepare_image(const ColorImage& img, const GroundTruth& gt, const PipelineConfig& cfg) {
  PreparedImage p;
  p.id = gt.image_id;
  p.gt = gt;
  p.labeling = label_proposals(propose(img, cfg), gt, cfg.labels);
  for (auto& inst : p.labeling.instances) inst.patch = proposal_patch(img, inst.proposal, cfg);
  return p;
}

inline std::vector<PreparedImage> prepare_dataset(const std::vector<DatasetImage>& data, const PipelineConfig& cfg,
                                                  int jobs = 1) {
  std::vector<PreparedImage> out(data.size());
  parallel_for(data.size(), jobs, [&](std::size_t i) {
    out[i] = prepare_image(data[i].image, data[i].gt, cfg);
    out[i].axes = data[i].axes;
  });
  return out;
}

/// Mirror asymmetry of a flat CHW input: |x - flip(x)|^2 / (|x|^2 + |flip(x)|^2),
/// with flip reversing each row. 0 for a left-right symmetric input, at most 2.
inline double mirror_asymmetry(const std::vector<double>& x, int size, int channels) {
  double num = 0.0, den = 0.0;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y) {
      const double* row = x.data() + (static_cast<std::size_t>(c) * size + y) * size;
      for (int i = 0; i < size; ++i) {
        const double a = row[i], b = row[size - 1 - i];
        num += (a - b) * (a - b);
        den += a * a + b * b;
      }
    }
  return den > 0.0 ? num / den : 0.0;
}

/// Pool the bags and negatives of the given images. Bag members whose input
/// mirror asymmetry exceeds `max_asymmetry` are dropped; a bag left empty
/// keeps its most symmetric member (first on ties). Negatives are kept as is.
inline TrainingSet build_training_set(const std::vector<const PreparedImage*>& images,
                                      double max_asymmetry = std::numeric_limits<double>::infinity()) {
  TrainingSet ts;
  for (const PreparedImage* img : images) {
    const auto& lab = img->labeling;
    std::vector<std::size_t> slot(lab.instances.size(), static_cast<std::size_t>(-1));
    auto input_of = [&](std::size_t i) {
      if (slot[i] == static_cast<std::size_t>(-1)) {
        slot[i] = ts.inputs.size();
        ts.inputs.push_back(patch_to_input(lab.instances[i].patch));
      }
      return slot[i];
    };
    for (const auto& bag : lab.bags) {
      std::vector<std::size_t> members;
      std::size_t most_symmetric = 0;
      double lowest = std::numeric_limits<double>::infinity();
      for (std::size_t m : bag.members) {
        const std::size_t k = input_of(m);
        const auto& patch = lab.instances[m].patch;
        const double a = mirror_asymmetry(ts.inputs[k], patch.size, patch.channels);
        if (a < lowest) {
          lowest = a;
          most_symmetric = k;
        }
        if (a <= max_asymmetry) members.push_back(k);
      }
      if (members.empty() && !bag.members.empty()) members.push_back(most_symmetric);
      ts.bags.push_back(std::move(members));
    }
    for (std::size_t n : lab.negatives) ts.negatives.push_back(input_of(n));
  }
  return ts;
}

struct TrainedModel {
  ScorerModel model;
  OptimizerState optimizer;
  TrainHistory history;
};

inline TrainedModel train_model(const TrainingSet& ts, int channels, const PipelineConfig& cfg) {
  TrainedModel t;
  t.model = ScorerModel(cfg.network(channels));
  t.model.init(cfg.seed);
  TrainSchedule schedule = cfg.schedule;
  schedule.seed = cfg.seed;
  t.history = train(t.model, t.optimizer, ts, schedule);
  return t;
}

/// Scores of every proposal in `img`, order preserved.
inline std::vector<double> score_image(const ScorerModel& model, const PreparedImage& img) {
  std::vector<double> scores;
  scores.reserve(img.labeling.instances.size());
  Tape tape;
  for (const auto& inst : img.labeling.instances) scores.push_back(model.forward(patch_to_input(inst.patch), tape));
  return scores;
}

inline std::vector<Detection> detect_from_scores(const PreparedImage& img, const std::vector<double>& scores,
                                                 const NmsParams& nms_params) {
  std::vector<ScoredSquare> cands;
  cands.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) cands.push_back({img.labeling.instances[i].proposal.square, scores[i]});
  return nms(cands, nms_params, img.id);
}

/// Training on the pooled bags and negatives of `images`, with bag
/// members above `cfg.bag_max_asymmetry` filtered out.
inline TrainedModel train_model(const std::vector<const PreparedImage*>& images, int channels,
                                const PipelineConfig& cfg) {
  return train_model(build_training_set(images, cfg.bag_max_asymmetry), channels, cfg);
}

}  // namespace slsmil
