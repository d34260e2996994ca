#pragma once

// Synthetic aerial scenes: bilaterally symmetric airplane silhouettes of known
// pose plus non-mirrored clutter, with box-level and axis ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "slsmil/annotations.hpp"
#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"
#include "slsmil/image.hpp"
#include "slsmil/raster_io.hpp"
#include "slsmil/sls.hpp"

namespace slsmil {

struct SceneSpec {
  int width = 384;
  int height = 384;
  int channels = 3;
  int planes = 3;
  double length_min = 30.0;
  double length_max = 126.0;
  int clutter = 10;
  double noise_sigma = 0.02;
  std::uint64_t seed = 1;

  void validate() const {
    if (width < 16 || height < 16) throw Error(ErrorCode::InvalidArgument, "scene too small");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "channels must be 1 or 3");
    if (planes < 0 || clutter < 0) throw Error(ErrorCode::InvalidArgument, "counts must be >= 0");
    if (!(length_min > 0.0) || !(length_max >= length_min))
      throw Error(ErrorCode::InvalidArgument, "invalid length range");
    if (noise_sigma < 0.0) throw Error(ErrorCode::InvalidArgument, "noise sigma must be >= 0");
  }
};

struct AirplaneTruth {
  Aabb box;
  double axis = 0.0;  // nose direction, (-pi, pi]
  double length = 0.0;
  Point2 center;
};

struct SceneTruth {
  std::vector<AirplaneTruth> planes;
};

struct Scene {
  ColorImage image;
  SceneTruth truth;
  std::vector<std::vector<Point2>> outlines;  // per airplane, image coordinates
};

/// Shape parameters of one silhouette, all in pixels, in the airplane frame
/// (+x towards the nose, y across the wings, origin at the reference centre).
struct AirplaneShape {
  double length = 60.0;
  double half_width = 4.0;
  double nose = 9.0;
  double span = 40.0;
  double wing_root_x = 3.0;
  double sweep = 10.0;
  double root_chord = 14.0;
  double tip_chord = 5.0;
  double tail_span = 19.0;
};

/// Closed outline, nose first, right side (y > 0) then the mirrored left side.
inline std::vector<Point2> airplane_outline_local(const AirplaneShape& s) {
  const double L = s.length, w = s.half_width;
  const double tail_root_te = -0.5 * L + 0.03 * L;
  const double tail_root_chord = 0.12 * L;
  const double tail_root_le = tail_root_te + tail_root_chord;
  const double tail_sweep = 0.06 * L;
  const double tail_tip_chord = 0.06 * L;
  std::vector<Point2> right = {
      {0.5 * L - s.nose, w},
      {s.wing_root_x, w},
      {s.wing_root_x - s.sweep, 0.5 * s.span},
      {s.wing_root_x - s.sweep - s.tip_chord, 0.5 * s.span},
      {s.wing_root_x - s.root_chord, w},
      {tail_root_le, w},
      {tail_root_le - tail_sweep, 0.5 * s.tail_span},
      {tail_root_le - tail_sweep - tail_tip_chord, 0.5 * s.tail_span},
      {tail_root_te, w},
      {-0.5 * L, w},
  };
  std::vector<Point2> out;
  out.push_back({0.5 * L, 0.0});
  out.insert(out.end(), right.begin(), right.end());
  for (auto it = right.rbegin(); it != right.rend(); ++it) out.push_back({it->x, -it->y});
  return out;
}

inline std::vector<Point2> place_outline(const std::vector<Point2>& local, Point2 center, double angle) {
  std::vector<Point2> out;
  out.reserve(local.size());
  for (const Point2& p : local) out.push_back(center + rotate(p, angle));
  return out;
}

inline bool point_in_polygon(const std::vector<Point2>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2& a = poly[i];
    const Point2& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) inside = !inside;
  }
  return inside;
}

/// Per-pixel area coverage of a simple polygon estimated on a regular
/// `ss` x `ss` subsample grid; zero outside the polygon's bounding box.
inline GrayImage polygon_coverage(const std::vector<Point2>& poly, int width, int height, int ss = 4) {
  GrayImage cov(width, height, 0.0);
  double x0 = poly[0].x, x1 = poly[0].x, y0 = poly[0].y, y1 = poly[0].y;
  for (const Point2& p : poly) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int px0 = std::max(0, static_cast<int>(std::floor(x0)));
  const int px1 = std::min(width - 1, static_cast<int>(std::floor(x1)));
  const int py0 = std::max(0, static_cast<int>(std::floor(y0)));
  const int py1 = std::min(height - 1, static_cast<int>(std::floor(y1)));
  const double inv = 1.0 / (ss * ss);
  for (int y = py0; y <= py1; ++y)
    for (int x = px0; x <= px1; ++x) {
      int hits = 0;
      for (int j = 0; j < ss; ++j)
        for (int i = 0; i < ss; ++i)
          hits += point_in_polygon(poly, x + (i + 0.5) / ss, y + (j + 0.5) / ss);
      cov.at(x, y) = hits * inv;
    }
  return cov;
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline void composite(ColorImage& img, const GrayImage& cov, const std::vector<double>& color) {
  for (int c = 0; c < img.channel_count(); ++c) {
    auto& ch = img.channels[c].samples;
    for (std::size_t i = 0; i < ch.size(); ++i) {
      const double a = cov.samples[i];
      if (a > 0.0) ch[i] = (1.0 - a) * ch[i] + a * color[c];
    }
  }
}

inline std::vector<Point2> rectangle_outline(Point2 c, double len, double wid, double angle) {
  return place_outline({{-0.5 * len, -0.5 * wid}, {0.5 * len, -0.5 * wid},
                        {0.5 * len, 0.5 * wid}, {-0.5 * len, 0.5 * wid}},
                       c, angle);
}

inline double outline_radius(const std::vector<Point2>& local) {
  double r = 0.0;
  for (const Point2& p : local) r = std::max(r, norm(p));
  return r;
}

}  // namespace detail

inline AirplaneShape sample_airplane_shape(std::mt19937_64& rng, double length) {
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  AirplaneShape s;
  s.length = length;
  s.half_width = std::max(1.6, uni(0.055, 0.075) * length);
  s.nose = uni(0.12, 0.18) * length;
  s.span = uni(0.58, 0.72) * length;
  s.wing_root_x = uni(0.02, 0.10) * length;
  s.root_chord = uni(0.20, 0.26) * length;
  s.tip_chord = uni(0.25, 0.40) * s.root_chord;
  s.tail_span = uni(0.28, 0.36) * length;
  // Swept-back tapered wing: the trailing edge is swept too, so the leading
  // and trailing edges are not mirror images of each other.
  const double exposed = 0.5 * s.span - s.half_width;
  const double le_angle = uni(30.0, 40.0) * kPi / 180.0;
  s.sweep = std::max(exposed * std::tan(le_angle), s.root_chord - s.tip_chord + 0.04 * length);
  return s;
}

/// Render one scene. Deterministic for a given spec (including the seed).
inline Scene render_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uni = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };

  Scene scene;
  std::vector<double> background(spec.channels);
  for (double& b : background) b = uni(0.15, 0.45);
  scene.image = ColorImage(spec.width, spec.height, spec.channels);
  for (int c = 0; c < spec.channels; ++c)
    std::fill(scene.image.channels[c].samples.begin(), scene.image.channels[c].samples.end(),
              background[c]);

  struct Placed {
    Point2 center;
    double radius;
  };
  std::vector<Placed> placed;
  constexpr int kMaxAttempts = 1000;
  constexpr double kMargin = 4.0;

  struct PlaneDraw {
    std::vector<Point2> outline;
    std::vector<double> color;
    AirplaneTruth truth;
  };
  std::vector<PlaneDraw> planes;
  for (int k = 0; k < spec.planes; ++k) {
    bool ok = false;
    for (int attempt = 0; attempt < kMaxAttempts && !ok; ++attempt) {
      const double length = uni(spec.length_min, spec.length_max);
      const double angle = uni(0.0, 2.0 * kPi);
      const AirplaneShape shape = sample_airplane_shape(rng, length);
      const auto local = airplane_outline_local(shape);
      const double r = detail::outline_radius(local);
      if (2.0 * (r + kMargin) >= std::min(spec.width, spec.height)) continue;
      const Point2 c{uni(r + kMargin, spec.width - r - kMargin),
                     uni(r + kMargin, spec.height - r - kMargin)};
      const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Placed& p) {
        return distance(p.center, c) < p.radius + r + kMargin;
      });
      if (overlaps) continue;
      placed.push_back({c, r});
      PlaneDraw d;
      d.outline = place_outline(local, c, angle);
      d.color.resize(spec.channels);
      for (int ch = 0; ch < spec.channels; ++ch)
        d.color[ch] = std::min(1.0, background[ch] + uni(0.25, 0.45));
      d.truth.axis = normalize_angle(angle);
      d.truth.length = length;
      d.truth.center = c;
      planes.push_back(std::move(d));
      ok = true;
    }
    if (!ok)
      throw Error(ErrorCode::PlacementFailure,
                  "could not place airplane " + std::to_string(k) + " after 1000 attempts");
  }

  // Clutter: thin strokes (checked pairwise to be non-mirrored) and rectangles.
  std::vector<OrientedSegment> strokes;
  PairingParams pairing;
  for (int k = 0; k < spec.clutter; ++k) {
    const bool stroke = (k % 2 == 0);
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      const double len = stroke ? uni(15.0, 70.0) : uni(10.0, 50.0);
      const double wid = stroke ? uni(2.0, 4.0) : uni(8.0, 40.0);
      const double angle = uni(0.0, 2.0 * kPi);
      const double r = 0.5 * std::hypot(len, wid);
      if (2.0 * (r + kMargin) >= std::min(spec.width, spec.height)) continue;
      const Point2 c{uni(r + kMargin, spec.width - r - kMargin),
                     uni(r + kMargin, spec.height - r - kMargin)};
      const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Placed& p) {
        return distance(p.center, c) < p.radius + r + kMargin;
      });
      if (overlaps) continue;
      if (stroke) {
        const Point2 half = rotate({0.5 * len, 0.0}, angle);
        const OrientedSegment centerline{c - half, c + half, 0};
        bool mirrored = false;
        for (const OrientedSegment& other : strokes) {
          for (const OrientedSegment& cand : {centerline, OrientedSegment{centerline.b, centerline.a, 0}}) {
            const double lim = pairing.endpoint_distance_factor * std::max(cand.length(), other.length());
            const double closest = std::min({distance(cand.a, other.a), distance(cand.a, other.b),
                                             distance(cand.b, other.a), distance(cand.b, other.b)});
            if (closest > lim) continue;
            try {
              if (symmetry_score(other, cand) < pairing.sym_threshold) mirrored = true;
            } catch (const Error&) {
              mirrored = true;
            }
          }
        }
        if (mirrored) continue;
        strokes.push_back(centerline);
      }
      std::vector<double> color(spec.channels);
      const double sign = uni(0.0, 1.0) < 0.5 ? -1.0 : 1.0;
      for (int ch = 0; ch < spec.channels; ++ch)
        color[ch] = std::clamp(background[ch] + sign * uni(0.2, 0.4), 0.0, 1.0);
      const auto outline = detail::rectangle_outline(c, len, wid, angle);
      detail::composite(scene.image, polygon_coverage(outline, spec.width, spec.height), color);
      placed.push_back({c, r});
      break;
    }
  }

  for (PlaneDraw& d : planes) {
    const GrayImage cov = polygon_coverage(d.outline, spec.width, spec.height);
    detail::composite(scene.image, cov, d.color);
    int x0 = spec.width, y0 = spec.height, x1 = -1, y1 = -1;
    for (int y = 0; y < spec.height; ++y)
      for (int x = 0; x < spec.width; ++x)
        if (cov.at(x, y) > 0.0) {
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    d.truth.box = Aabb(x0, y0, x1 + 1.0, y1 + 1.0);
    scene.truth.planes.push_back(d.truth);
    scene.outlines.push_back(d.outline);
  }

  if (spec.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& ch : scene.image.channels)
      for (double& v : ch.samples) v += noise(rng);
  }
  quantize_8bit(scene.image);
  return scene;
}

inline GroundTruth scene_ground_truth(const SceneTruth& truth, const std::string& image_id) {
  GroundTruth gt{image_id, {}};
  for (const auto& p : truth.planes) gt.boxes.push_back(p.box);
  return gt;
}

/// Axis sidecar: `gt_index<TAB>axis_radians<TAB>length_px` per airplane.
inline std::string format_axis_sidecar(const SceneTruth& truth) {
  std::string out;
  char buf[96];
  for (std::size_t i = 0; i < truth.planes.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.17g\t%.17g\n", i, truth.planes[i].axis, truth.planes[i].length);
    out += buf;
  }
  return out;
}

struct AxisRecord {
  std::size_t gt_index = 0;
  double axis = 0.0;
  double length = 0.0;
};

inline std::vector<AxisRecord> read_axis_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<AxisRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    AxisRecord r;
    if (std::sscanf(line.c_str(), "%zu\t%lf\t%lf", &r.gt_index, &r.axis, &r.length) != 3)
      throw Error(ErrorCode::ParseError, path.string() + ": bad sidecar line " + std::to_string(lineno));
    out.push_back(r);
  }
  return out;
}

struct ManifestEntry {
  std::string image_id;
  std::filesystem::path image, annotation, sidecar;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::size_t total_planes = 0;
};

inline std::string dataset_image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img_%04zu", i);
  return buf;
}

inline std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  return detail::splitmix64(dataset_seed ^ detail::splitmix64(index + 1));
}

namespace detail {
inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
}
}  // namespace detail

/// Write `n` scenes as images/<id>.png, ground_truth/<id>.txt and
/// axes/<id>.txt under `out_dir`, plus manifest.txt listing everything.
inline Manifest emit_dataset(std::size_t n, const SceneSpec& spec, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  for (const char* sub : {"images", "ground_truth", "axes"}) {
    fs::create_directories(out_dir / sub, ec);
    if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + (out_dir / sub).string() + ": " + ec.message());
  }
  Manifest m;
  m.seed = spec.seed;
  std::string manifest = "seed\t" + std::to_string(spec.seed) + "\n";
  for (std::size_t i = 0; i < n; ++i) {
    SceneSpec s = spec;
    s.seed = scene_seed(spec.seed, i);
    const Scene scene = render_scene(s);
    ManifestEntry e;
    e.image_id = dataset_image_id(i);
    e.image = fs::path("images") / (e.image_id + ".png");
    e.annotation = fs::path("ground_truth") / (e.image_id + ".txt");
    e.sidecar = fs::path("axes") / (e.image_id + ".txt");
    write_png(out_dir / e.image, scene.image);
    detail::write_text(out_dir / e.annotation, format_annotations(scene_ground_truth(scene.truth, e.image_id)));
    detail::write_text(out_dir / e.sidecar, format_axis_sidecar(scene.truth));
    manifest += e.image_id + "\t" + e.image.string() + "\t" + e.annotation.string() + "\t" +
                e.sidecar.string() + "\n";
    m.total_planes += scene.truth.planes.size();
    m.entries.push_back(std::move(e));
  }
  detail::write_text(out_dir / "manifest.txt", manifest);
  return m;
}

}  // namespace slsmil
