#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "slsmil/annotations.hpp"
#include "slsmil/raster_io.hpp"
#include "slsmil/synthgen.hpp"

using namespace slsmil;
namespace fs = std::filesystem;

namespace {

SceneSpec single_plane(std::uint64_t seed) {
  SceneSpec s;
  s.seed = seed;
  s.planes = 1;
  s.clutter = 0;
  s.noise_sigma = 0;
  return s;
}

// Even-odd point test, independent of the renderer's.
bool inside_outline(const std::vector<Point2>& poly, double px, double py) {
  bool in = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point2 a = poly[i], b = poly[j];
    if ((a.y > py) != (b.y > py) && px < (b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x) in = !in;
  }
  return in;
}

// Mask of pixels whose centre is inside the outline.
std::vector<std::uint8_t> centre_mask(const std::vector<Point2>& poly, int w, int h) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) m[static_cast<std::size_t>(y) * w + x] = inside_outline(poly, x + 0.5, y + 0.5);
  return m;
}

double angle_mod(double a, double period) {
  const double r = std::fmod(std::fmod(a, period) + period, period);
  return std::min(r, period - r);
}

}  // namespace

TEST(Render, EmptySceneIsConstant) {
  SceneSpec s;
  s.planes = 0;
  s.clutter = 0;
  s.noise_sigma = 0;
  const Scene scene = render_scene(s);
  EXPECT_TRUE(scene.truth.planes.empty());
  for (const auto& ch : scene.image.channels)
    for (double v : ch.samples) EXPECT_EQ(v, ch.samples[0]);
}

TEST(Render, SameSeedSameImage) {
  SceneSpec s;
  s.seed = 77;
  const Scene a = render_scene(s), b = render_scene(s);
  for (int c = 0; c < a.image.channel_count(); ++c) EXPECT_EQ(a.image.channels[c].samples, b.image.channels[c].samples);
  s.seed = 78;
  EXPECT_NE(render_scene(s).image.channels[0].samples, a.image.channels[0].samples);
}

TEST(Render, PrincipalAxisMatchesDeclaredAxis) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scene scene = render_scene(single_plane(seed));
    const auto& t = scene.truth.planes[0];
    const int w = scene.image.width(), h = scene.image.height();
    const auto mask = centre_mask(scene.outlines[0], w, h);
    double n = 0, sx = 0, sy = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (mask[static_cast<std::size_t>(y) * w + x]) {
          n += 1;
          sx += x + 0.5;
          sy += y + 0.5;
        }
    const double mx = sx / n, my = sy / n;
    double cxx = 0, cyy = 0, cxy = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        if (mask[static_cast<std::size_t>(y) * w + x]) {
          const double dx = x + 0.5 - mx, dy = y + 0.5 - my;
          cxx += dx * dx;
          cyy += dy * dy;
          cxy += dx * dy;
        }
    // A mirror axis is one of the two principal axes.
    const double principal = 0.5 * std::atan2(2 * cxy, cxx - cyy);
    EXPECT_LT(angle_mod(principal - t.axis, kPi / 2) * 180 / kPi, 3.0) << seed;
    // The centroid lies on the symmetry axis.
    const Point2 u{std::cos(t.axis), std::sin(t.axis)};
    EXPECT_LT(std::abs(cross(u, Point2{mx, my} - t.center)), 1.0) << seed;
  }
}

TEST(Render, SilhouetteMirrorSelfTest) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scene scene = render_scene(single_plane(seed));
    const auto& t = scene.truth.planes[0];
    const int w = scene.image.width(), h = scene.image.height();
    const auto mask = centre_mask(scene.outlines[0], w, h);
    const Point2 a = t.center, b = t.center + Point2{std::cos(t.axis), std::sin(t.axis)};
    std::size_t inside = 0, agree = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!mask[static_cast<std::size_t>(y) * w + x]) continue;
        ++inside;
        const Point2 q = reflect_point({x + 0.5, y + 0.5}, a, b);
        agree += inside_outline(scene.outlines[0], q.x, q.y);
      }
    EXPECT_GE(static_cast<double>(agree) / inside, 0.999) << seed;
  }
}

TEST(Render, BoxesAreTightAndLengthsInRange) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SceneSpec s;
    s.seed = seed;
    const Scene scene = render_scene(s);
    ASSERT_EQ(scene.truth.planes.size(), 3u);
    for (std::size_t k = 0; k < scene.truth.planes.size(); ++k) {
      const auto& t = scene.truth.planes[k];
      EXPECT_GE(t.length, s.length_min);
      EXPECT_LE(t.length, s.length_max);
      double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9;
      for (const Point2& p : scene.outlines[k]) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
      }
      // The box is the support of the 4x4-supersampled coverage, so a sharp
      // tip may poke out by up to two sample spacings; never 2 px loose.
      const double sample = 0.5;
      EXPECT_LE(t.box.x_min, x0 + sample);
      EXPECT_LE(t.box.y_min, y0 + sample);
      EXPECT_GE(t.box.x_max, x1 - sample);
      EXPECT_GE(t.box.y_max, y1 - sample);
      EXPECT_LT(x0 - t.box.x_min, 2.0);
      EXPECT_LT(y0 - t.box.y_min, 2.0);
      EXPECT_LT(t.box.x_max - x1, 2.0);
      EXPECT_LT(t.box.y_max - y1, 2.0);
    }
  }
}

TEST(Render, FillContrastsWithBackground) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Scene scene = render_scene(single_plane(seed));
    const Point2 c = scene.truth.planes[0].center;
    for (const auto& ch : scene.image.channels) {
      const double inside = ch.at(static_cast<int>(c.x), static_cast<int>(c.y));
      EXPECT_GE(std::abs(inside - ch.at(0, 0)), 0.2 - 1.0 / 255) << seed;
    }
  }
}

TEST(Render, PlacementFailureIsReported) {
  SceneSpec s;
  s.width = s.height = 64;
  s.planes = 5;
  s.length_min = 50;
  s.length_max = 60;
  try {
    render_scene(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::PlacementFailure);
  }
}

TEST(Dataset, EmitAndReadBack) {
  const fs::path dir = fs::temp_directory_path() / ("slsmil_ds_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  SceneSpec spec;
  spec.seed = 12;
  const Manifest m = emit_dataset(4, spec, dir);
  ASSERT_EQ(m.entries.size(), 4u);
  std::size_t boxes = 0;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto& e = m.entries[i];
    EXPECT_EQ(e.image_id, dataset_image_id(i));
    SceneSpec s = spec;
    s.seed = scene_seed(spec.seed, i);
    const Scene scene = render_scene(s);
    const ColorImage img = read_image(dir / e.image);
    ASSERT_EQ(img.channel_count(), scene.image.channel_count());
    for (int c = 0; c < img.channel_count(); ++c)
      for (std::size_t k = 0; k < img.channels[c].samples.size(); ++k)
        ASSERT_EQ(img.channels[c].samples[k], scene.image.channels[c].samples[k]);
    const GroundTruth gt = read_annotations(dir / e.annotation, e.image_id);
    ASSERT_EQ(gt.boxes.size(), scene.truth.planes.size());
    for (std::size_t k = 0; k < gt.boxes.size(); ++k) {
      EXPECT_EQ(gt.boxes[k].x_min, scene.truth.planes[k].box.x_min);
      EXPECT_EQ(gt.boxes[k].y_max, scene.truth.planes[k].box.y_max);
    }
    const auto axes = read_axis_sidecar(dir / e.sidecar);
    ASSERT_EQ(axes.size(), scene.truth.planes.size());
    for (std::size_t k = 0; k < axes.size(); ++k) EXPECT_EQ(axes[k].axis, scene.truth.planes[k].axis);
    boxes += gt.boxes.size();
  }
  EXPECT_EQ(boxes, m.total_planes);
  EXPECT_TRUE(fs::exists(dir / "manifest.txt"));
  fs::remove_all(dir);
}

TEST(Dataset, UnwritableDirectoryFails) {
  try {
    emit_dataset(1, SceneSpec{}, "/proc/slsmil_no_such_dir");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IoFailure);
  }
}
