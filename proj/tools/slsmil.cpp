// slsmil: command-line front end for the symmetric-line-segment airplane
// detector. Subcommands: synth, propose, train, detect, evaluate.
// Data goes to files; diagnostics go to stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "slsmil/crossval.hpp"
#include "slsmil/records.hpp"

namespace fs = std::filesystem;
using namespace slsmil;

namespace {

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "key = value configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "random seed (default: SLSMIL_SEED, then the config seed)");
  cmd->add_option("--jobs", o.jobs, "worker threads for per-image work")->check(CLI::PositiveNumber);
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SLSMIL_SEED");
  if (!s || !*s) return std::nullopt;
  std::uint64_t v = 0;
  if (!detail::parse_integer(std::string(s), v))
    throw Error(ErrorCode::ConfigError, std::string("SLSMIL_SEED is not an unsigned integer: ") + s);
  return v;
}

PipelineConfig resolve_config(const CommonOptions& o) {
  PipelineConfig cfg = o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.seed)
    cfg.seed = *o.seed;
  else if (auto s = env_seed())
    cfg.seed = *s;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + path.parent_path().string() + ": " + ec.message());
  }
  detail::write_text(path, text);
}

/// Images named on the command line: files, or directories scanned for
/// rasters (sorted by name).
std::vector<fs::path> collect_images(const std::vector<std::string>& args) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && is_raster_path(e.path())) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      out.insert(out.end(), files.begin(), files.end());
    } else if (fs::is_regular_file(p)) {
      out.push_back(p);
    } else {
      throw Error(ErrorCode::IoFailure, "no such image or directory: " + a);
    }
  }
  return out;
}

std::map<std::string, int> read_fold_spec(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open fold spec " + path.string());
  std::map<std::string, int> folds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = detail::split_tabs(line);
    int k = 0;
    if (f.size() != 2 || !detail::parse_integer(f[1], k) || k < 0)
      throw Error(ErrorCode::ParseError, path.string() + ": expected `image_id<TAB>fold` at line " + std::to_string(lineno));
    folds[f[0]] = k;
  }
  return folds;
}

std::string format_fold_spec(const FoldSplit& split) {
  std::string out;
  for (const auto& [id, f] : split.assignment) out += id + "\t" + std::to_string(f) + "\n";
  return out;
}

/// Training or evaluation subset selected by a fold spec. With no spec,
/// every image is used.
std::vector<const DatasetImage*> select_images(const std::vector<DatasetImage>& data, const std::string& fold_spec,
                                               std::optional<int> fold, bool held_out) {
  std::vector<const DatasetImage*> out;
  if (fold_spec.empty()) {
    for (const auto& d : data) out.push_back(&d);
    return out;
  }
  if (!fold) throw Error(ErrorCode::InvalidArgument, "--fold-spec needs --fold");
  const auto folds = read_fold_spec(fold_spec);
  for (const auto& d : data) {
    const auto it = folds.find(d.id);
    if (it == folds.end()) throw Error(ErrorCode::InvalidArgument, "image " + d.id + " is missing from the fold spec");
    if ((it->second == *fold) == held_out) out.push_back(&d);
  }
  for (const auto& [id, f] : folds) {
    (void)f;
    const bool known = std::any_of(data.begin(), data.end(), [&](const DatasetImage& d) { return d.id == id; });
    if (!known) throw Error(ErrorCode::InvalidArgument, "fold spec names unknown image " + id);
  }
  if (out.empty()) throw Error(ErrorCode::InvalidArgument, "fold selection is empty");
  return out;
}

std::vector<PreparedImage> prepare_subset(const std::vector<const DatasetImage*>& subset, const PipelineConfig& cfg,
                                          int jobs) {
  std::vector<PreparedImage> out(subset.size());
  parallel_for(subset.size(), jobs, [&](std::size_t i) {
    out[i] = prepare_image(subset[i]->image, subset[i]->gt, cfg);
    out[i].axes = subset[i]->axes;
  });
  return out;
}

int channel_count(const std::vector<DatasetImage>& data) {
  if (data.empty()) throw Error(ErrorCode::InsufficientData, "dataset has no images");
  const int c = data.front().image.channel_count();
  for (const auto& d : data)
    if (d.image.channel_count() != c) throw Error(ErrorCode::ShapeMismatch, "images differ in channel count");
  return c;
}

// ---------------------------------------------------------------------------
// Overlay drawing

void plot(ColorImage& img, int x, int y, const std::vector<double>& color) {
  if (x < 0 || y < 0 || x >= img.width() || y >= img.height()) return;
  for (int c = 0; c < img.channel_count(); ++c) img.channels[c].at(x, y) = color[static_cast<std::size_t>(c) % color.size()];
}

void draw_line(ColorImage& img, Point2 a, Point2 b, const std::vector<double>& color) {
  const double len = distance(a, b);
  const int steps = std::max(1, static_cast<int>(std::ceil(len * 2.0)));
  for (int i = 0; i <= steps; ++i) {
    const Point2 p = a + (static_cast<double>(i) / steps) * (b - a);
    plot(img, static_cast<int>(std::floor(p.x)), static_cast<int>(std::floor(p.y)), color);
  }
}

void draw_detection(ColorImage& img, const Detection& d) {
  const std::vector<double> box_color = {1.0, 0.1, 0.1};
  const std::vector<double> arrow_color = {1.0, 1.0, 0.0};
  const ConvexPolygon poly = square_to_polygon(d.square);
  const auto& v = poly.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) draw_line(img, v[i], v[(i + 1) % v.size()], box_color);
  const Point2 dir{std::cos(d.direction), std::sin(d.direction)};
  const Point2 tip = d.square.center + (0.45 * d.square.side) * dir;
  draw_line(img, d.square.center, tip, arrow_color);
  const double head = 0.12 * d.square.side;
  draw_line(img, tip, tip - head * rotate(dir, 0.5), arrow_color);
  draw_line(img, tip, tip - head * rotate(dir, -0.5), arrow_color);
}

// ---------------------------------------------------------------------------
// Subcommands

struct SynthOptions {
  std::size_t n = 30;
  std::string out;
  std::optional<std::uint64_t> seed;
  int size = 384;
  int planes = 3;
  int clutter = 10;
  double noise = 0.02;
  int channels = 3;
};

int cmd_synth(const SynthOptions& o) {
  SceneSpec spec;
  spec.width = spec.height = o.size;
  spec.planes = o.planes;
  spec.clutter = o.clutter;
  spec.noise_sigma = o.noise;
  spec.channels = o.channels;
  if (o.seed)
    spec.seed = *o.seed;
  else if (auto s = env_seed())
    spec.seed = *s;
  const Manifest m = emit_dataset(o.n, spec, o.out);
  std::cerr << "wrote " << m.entries.size() << " scenes with " << m.total_planes << " airplanes to " << o.out << "\n";
  return 0;
}

struct ProposeOptions {
  CommonOptions common;
  std::vector<std::string> images;
  std::string out;
};

int cmd_propose(const ProposeOptions& o) {
  const PipelineConfig cfg = resolve_config(o.common);
  const auto paths = collect_images(o.images);
  std::vector<std::string> chunks(paths.size());
  std::vector<std::size_t> counts(paths.size());
  parallel_for(paths.size(), o.common.jobs, [&](std::size_t i) {
    const ColorImage img = read_image(paths[i]);
    const auto props = propose(img, cfg);
    const std::string id = paths[i].stem().string();
    for (const auto& p : props) chunks[i] += format_proposal(id, p);
    counts[i] = props.size();
  });
  std::string all;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    all += chunks[i];
    std::cerr << paths[i].stem().string() << "\t" << counts[i] << " proposals\n";
  }
  write_file(o.out, all);
  return 0;
}

struct TrainOptions {
  CommonOptions common;
  std::string data;
  std::string out;
  std::string history;
  std::string fold_spec;
  std::optional<int> fold;
  std::optional<int> steps;
  std::optional<double> learning_rate;
};

int cmd_train(const TrainOptions& o) {
  PipelineConfig cfg = resolve_config(o.common);
  if (o.steps) cfg.schedule.max_steps = *o.steps;
  if (o.learning_rate) cfg.schedule.learning_rate = *o.learning_rate;
  cfg.validate();
  const auto data = load_dataset(o.data);
  const int channels = channel_count(data);
  const auto subset = select_images(data, o.fold_spec, o.fold, false);
  const auto prepared = prepare_subset(subset, cfg, o.common.jobs);
  std::vector<const PreparedImage*> ptrs;
  for (const auto& p : prepared) ptrs.push_back(&p);
  std::size_t bags = 0, negatives = 0;
  for (const auto& p : prepared) {
    bags += p.labeling.bags.size();
    negatives += p.labeling.negatives.size();
  }
  std::cerr << "training on " << prepared.size() << " images: " << bags << " positive bags, " << negatives
            << " negatives\n";
  const TrainedModel tm = train_model(ptrs, channels, cfg);
  save_checkpoint(tm.model, &tm.optimizer, o.out);
  if (!o.history.empty()) {
    std::string h = "step\tkind\tloss\tmean_p\tbag\tbag_size\tactive\n";
    char line[160];
    for (std::size_t i = 0; i < tm.history.steps.size(); ++i) {
      const auto& s = tm.history.steps[i];
      std::snprintf(line, sizeof line, "%zu\t%s\t%.17g\t%.17g\t%zu\t%zu\t%zu\n", i,
                    s.kind == StepKind::Negative ? "neg" : "pos", s.loss, s.mean_p, s.bag, s.bag_size, s.active_count);
      h += line;
    }
    write_file(o.history, h);
  }
  std::cerr << "saved " << tm.model.parameter_count() << " parameters to " << o.out << "\n";
  return 0;
}

struct DetectOptions {
  CommonOptions common;
  std::string checkpoint;
  std::vector<std::string> images;
  std::string out;
  std::string overlay_dir;
  std::optional<double> score_threshold;
};

int cmd_detect(const DetectOptions& o) {
  PipelineConfig cfg = resolve_config(o.common);
  if (o.score_threshold) cfg.nms.score_threshold = *o.score_threshold;
  cfg.nms.validate();
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  if (ck.model.input().height != cfg.input_size || ck.model.input().width != cfg.input_size)
    throw Error(ErrorCode::ShapeMismatch, "checkpoint input size differs from model.input_size");
  const auto paths = collect_images(o.images);
  if (!o.overlay_dir.empty()) {
    std::error_code ec;
    fs::create_directories(o.overlay_dir, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + o.overlay_dir + ": " + ec.message());
  }
  std::vector<std::string> chunks(paths.size());
  std::vector<std::size_t> counts(paths.size());
  parallel_for(paths.size(), o.common.jobs, [&](std::size_t i) {
    ColorImage img = read_image(paths[i]);
    if (img.channel_count() != ck.model.input().channels)
      throw Error(ErrorCode::ShapeMismatch, paths[i].string() + ": channel count differs from the checkpoint");
    const std::string id = paths[i].stem().string();
    const PreparedImage prep = prepare_image(img, GroundTruth{id, {}}, cfg);
    const auto dets = detect_from_scores(prep, score_image(ck.model, prep), cfg.nms);
    for (const auto& d : dets) chunks[i] += format_detection(d);
    counts[i] = dets.size();
    if (!o.overlay_dir.empty()) {
      for (const auto& d : dets) draw_detection(img, d);
      write_png(fs::path(o.overlay_dir) / (id + ".png"), img);
    }
  });
  std::string all;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    all += chunks[i];
    std::cerr << paths[i].stem().string() << "\t" << counts[i] << " detections\n";
  }
  write_file(o.out, all);
  return 0;
}

struct EvaluateOptions {
  CommonOptions common;
  std::string data;
  std::string out;
  std::optional<int> k;
  std::string checkpoint;
  std::string fold_spec;
  std::optional<int> fold;
};

int cmd_evaluate(const EvaluateOptions& o) {
  PipelineConfig cfg = resolve_config(o.common);
  if (o.k) {
    if (*o.k < 2) throw Error(ErrorCode::InvalidArgument, "--k must be at least 2");
    cfg.folds = *o.k;
  }
  cfg.validate();
  const auto data = load_dataset(o.data);
  const int channels = channel_count(data);
  CvReport rep;
  if (o.checkpoint.empty()) {
    if (!o.fold_spec.empty()) throw Error(ErrorCode::InvalidArgument, "--fold-spec applies to checkpoint evaluation only");
    std::vector<std::string> ids;
    for (const auto& d : data) ids.push_back(d.id);
    if (ids.size() < static_cast<std::size_t>(cfg.folds))
      throw Error(ErrorCode::TooFewImages, "need at least " + std::to_string(cfg.folds) + " images for " +
                                               std::to_string(cfg.folds) + "-fold evaluation");
    const auto prepared = prepare_dataset(data, cfg, o.common.jobs);
    rep = run_cross_validation(prepared, channels, cfg, o.common.jobs);
    write_file(fs::path(o.out) / "folds.txt", format_fold_spec(split_folds(ids, cfg.folds, cfg.seed)));
  } else {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const auto subset = select_images(data, o.fold_spec, o.fold, true);
    const auto prepared = prepare_subset(subset, cfg, o.common.jobs);
    std::vector<const PreparedImage*> ptrs;
    for (const auto& p : prepared) ptrs.push_back(&p);
    rep.total = evaluate_images(ck.model, ptrs, cfg, o.common.jobs);
    rep.total.name = "Total";
  }
  const std::string text = format_report_text(rep);
  write_file(fs::path(o.out) / "report.txt", text);
  write_file(fs::path(o.out) / "report.jsonl", format_report_records(rep));
  write_file(fs::path(o.out) / "pr_curve.txt", format_pr_curve(rep.total.curve));
  std::cerr << text;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Airplane detection from symmetric line segment proposals"};
  app.require_subcommand(1);

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "render a synthetic dataset");
  c_synth->add_option("--n", synth.n, "number of scenes")->required();
  c_synth->add_option("--out", synth.out, "output directory")->required();
  c_synth->add_option("--seed", synth.seed, "dataset seed (default: SLSMIL_SEED, then 1)");
  c_synth->add_option("--size", synth.size, "image side in pixels")->check(CLI::Range(64, 8192));
  c_synth->add_option("--planes", synth.planes, "airplanes per scene")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--clutter", synth.clutter, "clutter items per scene")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--noise", synth.noise, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  c_synth->add_option("--channels", synth.channels, "1 or 3")->check(CLI::IsMember({1, 3}));

  ProposeOptions propose_o;
  auto* c_propose = app.add_subcommand("propose", "extract symmetric line segment proposals");
  add_common(c_propose, propose_o.common);
  c_propose->add_option("--images", propose_o.images, "image files or directories")->required();
  c_propose->add_option("--out", propose_o.out, "proposal record file")->required();

  TrainOptions train_o;
  auto* c_train = app.add_subcommand("train", "train the proposal scorer");
  add_common(c_train, train_o.common);
  c_train->add_option("--data", train_o.data, "dataset directory (images/, ground_truth/)")->required();
  c_train->add_option("--out", train_o.out, "checkpoint path")->required();
  c_train->add_option("--history", train_o.history, "per-step loss history file");
  c_train->add_option("--fold-spec", train_o.fold_spec, "image_id<TAB>fold file; trains on all folds but --fold");
  c_train->add_option("--fold", train_o.fold, "held-out fold index");
  c_train->add_option("--steps", train_o.steps, "override train.max_steps")->check(CLI::NonNegativeNumber);
  c_train->add_option("--lr", train_o.learning_rate, "override train.learning_rate")->check(CLI::NonNegativeNumber);

  DetectOptions detect_o;
  auto* c_detect = app.add_subcommand("detect", "detect airplanes with a trained checkpoint");
  add_common(c_detect, detect_o.common);
  c_detect->add_option("--checkpoint", detect_o.checkpoint, "checkpoint path")->required();
  c_detect->add_option("--images", detect_o.images, "image files or directories")->required();
  c_detect->add_option("--out", detect_o.out, "detection record file")->required();
  c_detect->add_option("--overlay-dir", detect_o.overlay_dir, "write images with detections drawn");
  c_detect->add_option("--score-threshold", detect_o.score_threshold, "override nms.score_threshold");

  EvaluateOptions eval_o;
  auto* c_eval = app.add_subcommand("evaluate", "cross-validate, or evaluate a checkpoint");
  add_common(c_eval, eval_o.common);
  c_eval->add_option("--data", eval_o.data, "dataset directory")->required();
  c_eval->add_option("--out", eval_o.out, "report directory")->required();
  c_eval->add_option("--k", eval_o.k, "number of folds (>= 2)");
  c_eval->add_option("--checkpoint", eval_o.checkpoint, "evaluate this checkpoint instead of cross-validating");
  c_eval->add_option("--fold-spec", eval_o.fold_spec, "with --checkpoint: evaluate only the --fold images");
  c_eval->add_option("--fold", eval_o.fold, "fold index for --fold-spec");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*c_synth) return cmd_synth(synth);
    if (*c_propose) return cmd_propose(propose_o);
    if (*c_train) return cmd_train(train_o);
    if (*c_detect) return cmd_detect(detect_o);
    if (*c_eval) {
      if (eval_o.k && *eval_o.k < 2) {
        std::cerr << "usage error: --k must be at least 2\n";
        return 2;
      }
      return cmd_evaluate(eval_o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
