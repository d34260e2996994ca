#pragma once

// k-fold cross-validation over a prepared dataset with a per-stage report:
// proposal stage, classifier stage and suppression stage, each with label
// counts and TP / FN / FP, followed by recall, precision, F1 and AP.

#include <algorithm>
#include <cstdio>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "slsmil/bagging.hpp"
#include "slsmil/config.hpp"
#include "slsmil/evalkit.hpp"
#include "slsmil/pipeline.hpp"

namespace slsmil {

struct StageRow {
  std::size_t pos = 0, neg = 0, ind = 0;
  std::size_t tp = 0, fn = 0, fp = 0;

  void add(const StageRow& o) {
    pos += o.pos;
    neg += o.neg;
    ind += o.ind;
    tp += o.tp;
    fn += o.fn;
    fp += o.fp;
  }
  Prf metrics() const { return prf(tp, fn, fp); }
};

struct FoldReport {
  std::string name;
  std::vector<std::string> train_ids, eval_ids;
  StageRow sls, cnn, nms;
  std::size_t gt_count = 0;
  std::size_t bags = 0;           // ground-truth boxes with at least one positive proposal
  std::size_t bags_rejected = 0;  // of those, boxes with no positive proposal above the score threshold
  std::vector<double> direction_errors;  // degrees, one per true positive with a known axis
  PrCurve curve;
  std::vector<double> sweep_scores;  // every detection above the AP score floor
  std::vector<bool> sweep_correct;
  double first_negative_loss = 0.0, last_negative_loss = 0.0;

  double bag_rejection_rate() const { return bags ? static_cast<double>(bags_rejected) / bags : 0.0; }
};

struct CvReport {
  std::vector<FoldReport> folds;
  FoldReport total;
};

inline std::optional<double> median(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

inline void count_label(StageRow& row, Label l) {
  if (l == Label::Positive)
    ++row.pos;
  else if (l == Label::Negative)
    ++row.neg;
  else
    ++row.ind;
}

// Instance-level stage accounting: a gt box is found when at least one kept
// instance is positive for it; every other kept instance is a false positive.
inline StageRow instance_stage(const PreparedImage& img, const std::vector<bool>& kept) {
  StageRow row;
  std::set<std::size_t> found;
  std::size_t n = 0;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (!kept[i]) continue;
    ++n;
    const auto& inst = img.labeling.instances[i];
    count_label(row, inst.label);
    if (inst.gt_index) found.insert(*inst.gt_index);
  }
  row.tp = found.size();
  row.fn = img.gt.boxes.size() - row.tp;
  row.fp = n - row.tp;
  return row;
}

struct ImageEval {
  StageRow sls, cnn, nms;
  std::vector<double> ap_scores;
  std::vector<bool> ap_correct;
  std::vector<double> direction_errors;
};

inline ImageEval evaluate_image(const ScorerModel& model, const PreparedImage& img, const PipelineConfig& cfg) {
  ImageEval ev;
  const std::vector<double> scores = score_image(model, img);
  const std::size_t n = scores.size();
  ev.sls = instance_stage(img, std::vector<bool>(n, true));
  std::vector<bool> above(n);
  for (std::size_t i = 0; i < n; ++i) above[i] = scores[i] >= cfg.nms.score_threshold;
  ev.cnn = instance_stage(img, above);

  const auto dets = detect_from_scores(img, scores, cfg.nms);
  const MatchResult m = match_detections(dets, img.gt.boxes, cfg.match_iou);
  for (const auto& d : dets) {
    double best = 0.0;
    for (const auto& b : img.gt.boxes) best = std::max(best, iou(d.square, b));
    count_label(ev.nms, label_for_iou(best, cfg.labels));
  }
  ev.nms.tp = m.tp;
  ev.nms.fn = m.fn;
  ev.nms.fp = m.fp;
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!m.det_gt[d]) continue;
    for (const auto& a : img.axes)
      if (a.gt_index == *m.det_gt[d]) ev.direction_errors.push_back(direction_error(dets[d], a.axis));
  }

  NmsParams sweep = cfg.nms;
  sweep.score_threshold = cfg.ap_score_floor;
  const auto all = detect_from_scores(img, scores, sweep);
  const MatchResult ma = match_detections(all, img.gt.boxes, cfg.match_iou);
  for (std::size_t d = 0; d < all.size(); ++d) {
    ev.ap_scores.push_back(all[d].score);
    ev.ap_correct.push_back(ma.det_matched[d]);
  }
  return ev;
}

}  // namespace detail

/// Evaluate a trained model on the given images.
inline FoldReport evaluate_images(const ScorerModel& model, const std::vector<const PreparedImage*>& images,
                                  const PipelineConfig& cfg, int jobs = 1) {
  std::vector<detail::ImageEval> evals(images.size());
  parallel_for(images.size(), jobs, [&](std::size_t i) { evals[i] = detail::evaluate_image(model, *images[i], cfg); });
  FoldReport r;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& ev = evals[i];
    r.eval_ids.push_back(images[i]->id);
    r.sls.add(ev.sls);
    r.cnn.add(ev.cnn);
    r.nms.add(ev.nms);
    r.gt_count += images[i]->gt.boxes.size();
    r.sweep_scores.insert(r.sweep_scores.end(), ev.ap_scores.begin(), ev.ap_scores.end());
    r.sweep_correct.insert(r.sweep_correct.end(), ev.ap_correct.begin(), ev.ap_correct.end());
    r.direction_errors.insert(r.direction_errors.end(), ev.direction_errors.begin(), ev.direction_errors.end());
  }
  r.bags = r.sls.tp;
  r.bags_rejected = r.sls.tp - r.cnn.tp;
  r.curve = pr_curve(r.sweep_scores, r.sweep_correct, r.gt_count);
  return r;
}

namespace detail {

inline double mean_negative_loss(const TrainHistory& h, bool first, std::size_t window = 25) {
  std::vector<double> losses;
  for (const auto& s : h.steps)
    if (s.kind == StepKind::Negative) losses.push_back(s.loss);
  if (losses.empty()) return 0.0;
  const std::size_t w = std::min(window, losses.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w; ++i) sum += first ? losses[i] : losses[losses.size() - 1 - i];
  return sum / static_cast<double>(w);
}

}  // namespace detail

/// Image-level k-fold cross-validation: for every fold, train on the other
/// folds' images and evaluate on the held-out ones. The total row pools
/// all held-out evaluations (AP over the pooled detections).
inline CvReport run_cross_validation(const std::vector<PreparedImage>& data, int channels, const PipelineConfig& cfg,
                                     int jobs = 1) {
  cfg.validate();
  std::vector<std::string> ids;
  for (const auto& d : data) ids.push_back(d.id);
  const FoldSplit split = split_folds(ids, cfg.folds, cfg.seed);

  CvReport rep;
  rep.total.name = "Total";
  for (int f = 0; f < cfg.folds; ++f) {
    std::vector<const PreparedImage*> train_set, eval_set;
    for (const auto& d : data) (split.fold_of(d.id) == f ? eval_set : train_set).push_back(&d);
    const TrainedModel tm = train_model(train_set, channels, cfg);

    FoldReport r = evaluate_images(tm.model, eval_set, cfg, jobs);
    r.name = "Fold " + std::to_string(f + 1);
    for (const auto* d : train_set) r.train_ids.push_back(d->id);
    for (const auto& id : r.train_ids)
      if (std::find(r.eval_ids.begin(), r.eval_ids.end(), id) != r.eval_ids.end())
        throw Error(ErrorCode::InvalidArgument, "fold leakage: " + id + " is in both training and evaluation");
    r.first_negative_loss = detail::mean_negative_loss(tm.history, true);
    r.last_negative_loss = detail::mean_negative_loss(tm.history, false);

    rep.total.sls.add(r.sls);
    rep.total.cnn.add(r.cnn);
    rep.total.nms.add(r.nms);
    rep.total.gt_count += r.gt_count;
    rep.total.bags += r.bags;
    rep.total.bags_rejected += r.bags_rejected;
    rep.total.direction_errors.insert(rep.total.direction_errors.end(), r.direction_errors.begin(),
                                      r.direction_errors.end());
    rep.total.eval_ids.insert(rep.total.eval_ids.end(), r.eval_ids.begin(), r.eval_ids.end());
    rep.total.sweep_scores.insert(rep.total.sweep_scores.end(), r.sweep_scores.begin(), r.sweep_scores.end());
    rep.total.sweep_correct.insert(rep.total.sweep_correct.end(), r.sweep_correct.begin(), r.sweep_correct.end());
    rep.folds.push_back(std::move(r));
  }
  rep.total.curve = pr_curve(rep.total.sweep_scores, rep.total.sweep_correct, rep.total.gt_count);
  return rep;
}

namespace detail {

inline std::string opt_fixed(const std::optional<double>& v, int digits = 3) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

}  // namespace detail

/// Aligned text table, one block of three stage rows per fold plus a total.
inline std::string format_report_text(const CvReport& rep) {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof line, "%-8s %-5s %8s %8s %7s %6s %5s %8s %7s %9s %6s %6s\n", "Fold", "Step", "Pos",
                "Neg", "Ind", "TP", "FN", "FP", "Recall", "Precision", "F1", "AP");
  out << line;
  auto block = [&](const FoldReport& f) {
    const std::pair<const char*, const StageRow*> rows[] = {{"SLS", &f.sls}, {"CNN", &f.cnn}, {"NMS", &f.nms}};
    for (const auto& [step, row] : rows) {
      const bool last = row == &f.nms;
      const Prf m = row->metrics();
      std::snprintf(line, sizeof line, "%-8s %-5s %8zu %8zu %7zu %6zu %5zu %8zu %7s %9s %6s %6s\n",
                    row == &f.sls ? f.name.c_str() : "", step, row->pos, row->neg, row->ind, row->tp, row->fn,
                    row->fp, last ? detail::opt_fixed(m.recall).c_str() : "",
                    last ? detail::opt_fixed(m.precision).c_str() : "", last ? detail::opt_fixed(m.f1).c_str() : "",
                    last ? detail::opt_fixed(f.curve.ap).c_str() : "");
      out << line;
    }
  };
  for (const auto& f : rep.folds) block(f);
  block(rep.total);
  const FoldReport& t = rep.total;
  std::snprintf(line, sizeof line, "positive bags rejected by the classifier: %zu of %zu (%.1f%%)\n", t.bags_rejected,
                t.bags, 100.0 * t.bag_rejection_rate());
  out << line;
  out << "median direction error of true positives (deg): " << detail::opt_fixed(median(t.direction_errors), 2)
      << " over " << t.direction_errors.size() << " detections\n";
  out << "AP: all-points precision envelope over every distinct score\n";
  return out.str();
}

/// One JSON object per line: a row per fold and stage, then a summary.
inline std::string format_report_records(const CvReport& rep) {
  using nlohmann::json;
  std::string out;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  auto emit = [&](const FoldReport& f) {
    const std::pair<const char*, const StageRow*> rows[] = {{"SLS", &f.sls}, {"CNN", &f.cnn}, {"NMS", &f.nms}};
    for (const auto& [step, row] : rows) {
      const Prf m = row->metrics();
      json j = {{"fold", f.name}, {"step", step},  {"pos", row->pos}, {"neg", row->neg},
                {"ind", row->ind}, {"tp", row->tp}, {"fn", row->fn},   {"fp", row->fp},
                {"recall", opt(m.recall)}, {"precision", opt(m.precision)}, {"f1", opt(m.f1)}};
      out += j.dump() + "\n";
    }
    json s = {{"fold", f.name},
              {"step", "summary"},
              {"gt", f.gt_count},
              {"ap", f.curve.ap},
              {"ap_convention", "all-points precision envelope"},
              {"bags", f.bags},
              {"bags_rejected", f.bags_rejected},
              {"median_direction_error_deg", opt(median(f.direction_errors))},
              {"direction_samples", f.direction_errors.size()},
              {"eval_images", f.eval_ids}};
    if (!f.train_ids.empty()) {
      s["train_images"] = f.train_ids;
      s["first_negative_loss"] = f.first_negative_loss;
      s["last_negative_loss"] = f.last_negative_loss;
    }
    out += s.dump() + "\n";
  };
  for (const auto& f : rep.folds) emit(f);
  emit(rep.total);
  return out;
}

/// `recall precision threshold` per line, descending threshold.
inline std::string format_pr_curve(const PrCurve& c) {
  std::string out;
  char line[96];
  for (const auto& p : c.points) {
    std::snprintf(line, sizeof line, "%.17g\t%.17g\t%.17g\n", p.recall, p.precision, p.threshold);
    out += line;
  }
  return out;
}

}  // namespace slsmil
