#pragma once

// Gradient-orientation region growing line segment detector. A simplified
// LSD: presmoothing, 2x2 gradient, greedy region growth over pixels whose
// gradient direction agrees within a tolerance, principal-axis rectangle fit,
// and an aligned-point density test in place of the a-contrario NFA.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "slsmil/error.hpp"
#include "slsmil/geom.hpp"
#include "slsmil/image.hpp"

namespace slsmil {

struct DetectorParams {
  double angle_tolerance = kPi / 8.0;   // 22.5 degrees
  double gradient_threshold = 2.0 / 255.0;  // quantisation step q; magnitude gate is q / sin(tol)
  double min_length = 8.0;
  double density_threshold = 0.7;
  double smoothing_sigma = 0.6;

  void validate() const {
    if (!(angle_tolerance > 0.0 && angle_tolerance < kPi / 2.0))
      throw Error(ErrorCode::InvalidArgument, "angle_tolerance must lie in (0, pi/2)");
    if (!(gradient_threshold > 0.0) || !(min_length > 0.0) || !(density_threshold > 0.0) ||
        smoothing_sigma < 0.0)
      throw Error(ErrorCode::InvalidArgument, "detector parameters must be positive");
  }
};

inline constexpr int kMinDetectorImageSide = 16;

/// Separable Gaussian blur with replicated borders; sigma <= 0 is identity.
inline GrayImage gaussian_blur(const GrayImage& img, double sigma) {
  if (sigma <= 0.0) return img;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;

  const int w = img.width, h = img.height;
  GrayImage tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * img.at(std::clamp(x + i, 0, w - 1), y);
      tmp.at(x, y) = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i)
        acc += k[i + radius] * tmp.at(x, std::clamp(y + i, 0, h - 1));
      out.at(x, y) = acc;
    }
  return out;
}

namespace detail {

struct GradientField {
  int width = 0;   // image width - 1
  int height = 0;  // image height - 1
  std::vector<double> gx, gy, mag;
  std::vector<std::uint8_t> valid;  // mag above the gate

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  // Gradient cell (x, y) is computed from pixels x..x+1, y..y+1; its
  // continuous location is the shared pixel corner.
  static Point2 location(int x, int y) { return {x + 1.0, y + 1.0}; }
};

inline GradientField compute_gradient(const GrayImage& img, double magnitude_gate) {
  GradientField g;
  g.width = img.width - 1;
  g.height = img.height - 1;
  const std::size_t n = static_cast<std::size_t>(g.width) * g.height;
  g.gx.resize(n);
  g.gy.resize(n);
  g.mag.resize(n);
  g.valid.resize(n);
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const double a = img.at(x, y), b = img.at(x + 1, y);
      const double c = img.at(x, y + 1), d = img.at(x + 1, y + 1);
      const double gx = 0.5 * (b + d - a - c);
      const double gy = 0.5 * (c + d - a - b);
      const std::size_t i = g.index(x, y);
      g.gx[i] = gx;
      g.gy[i] = gy;
      g.mag[i] = std::hypot(gx, gy);
      g.valid[i] = g.mag[i] > magnitude_gate;
    }
  return g;
}

struct Cell {
  int x, y;
};

struct RegionRect {
  Point2 p1, p2;  // along the principal axis
  double width = 1.0;
  Point2 mean_gradient;  // unit
};

inline double angle_between(double ax, double ay, double bx, double by) {
  return std::abs(std::atan2(ax * by - ay * bx, ax * bx + ay * by));
}

class RegionGrower {
 public:
  RegionGrower(const GradientField& g, std::vector<std::uint8_t>& used)
      : g_(g), used_(used) {}

  // Grow from `seed`, accepting 8-neighbours whose gradient direction lies
  // within `tol` of the running mean direction.
  void grow(Cell seed, double tol, std::vector<Cell>& region, double& rx, double& ry) {
    region.clear();
    region.push_back(seed);
    const std::size_t si = g_.index(seed.x, seed.y);
    used_[si] = 1;
    double sx = g_.gx[si] / g_.mag[si], sy = g_.gy[si] / g_.mag[si];
    rx = sx;
    ry = sy;
    const double cos_tol = std::cos(tol);
    for (std::size_t k = 0; k < region.size(); ++k) {
      const Cell c = region[k];
      for (int yy = c.y - 1; yy <= c.y + 1; ++yy)
        for (int xx = c.x - 1; xx <= c.x + 1; ++xx) {
          if (xx < 0 || yy < 0 || xx >= g_.width || yy >= g_.height) continue;
          const std::size_t i = g_.index(xx, yy);
          if (used_[i] || !g_.valid[i]) continue;
          const double ux = g_.gx[i] / g_.mag[i], uy = g_.gy[i] / g_.mag[i];
          if (ux * rx + uy * ry < cos_tol) continue;
          used_[i] = 1;
          region.push_back({xx, yy});
          sx += ux;
          sy += uy;
          const double sn = std::hypot(sx, sy);
          if (sn > 0.0) {
            rx = sx / sn;
            ry = sy / sn;
          }
        }
    }
  }

  RegionRect fit(const std::vector<Cell>& region) const {
    double cx = 0.0, cy = 0.0, wsum = 0.0, gxs = 0.0, gys = 0.0;
    for (const Cell& c : region) {
      const std::size_t i = g_.index(c.x, c.y);
      const double w = g_.mag[i];
      cx += c.x * w;
      cy += c.y * w;
      wsum += w;
      gxs += g_.gx[i] / w;
      gys += g_.gy[i] / w;
    }
    cx /= wsum;
    cy /= wsum;
    double ixx = 0.0, iyy = 0.0, ixy = 0.0;
    for (const Cell& c : region) {
      const double w = g_.mag[g_.index(c.x, c.y)];
      const double dx = c.x - cx, dy = c.y - cy;
      ixx += dx * dx * w;
      iyy += dy * dy * w;
      ixy += dx * dy * w;
    }
    // Principal axis of the weighted scatter.
    const double axis = 0.5 * std::atan2(2.0 * ixy, ixx - iyy);
    const double ax = std::cos(axis), ay = std::sin(axis);
    double lmin = 0.0, lmax = 0.0, wmin = 0.0, wmax = 0.0;
    for (const Cell& c : region) {
      const double dx = c.x - cx, dy = c.y - cy;
      const double l = dx * ax + dy * ay;
      const double w = -dx * ay + dy * ax;
      lmin = std::min(lmin, l);
      lmax = std::max(lmax, l);
      wmin = std::min(wmin, w);
      wmax = std::max(wmax, w);
    }
    const Point2 centre = GradientField::location(0, 0) + Point2{cx, cy};
    RegionRect r;
    r.p1 = centre + lmin * Point2{ax, ay};
    r.p2 = centre + lmax * Point2{ax, ay};
    r.width = std::max(1.0, wmax - wmin);
    const double gn = std::hypot(gxs, gys);
    r.mean_gradient = gn > 0.0 ? Point2{gxs / gn, gys / gn} : Point2{0.0, 0.0};
    return r;
  }

  static double density(const std::vector<Cell>& region, const RegionRect& r) {
    const double len = std::max(1.0, distance(r.p1, r.p2));
    return static_cast<double>(region.size()) / (len * r.width);
  }

  void release(const std::vector<Cell>& region) {
    for (const Cell& c : region) used_[g_.index(c.x, c.y)] = 0;
  }

  void claim(const std::vector<Cell>& region) {
    for (const Cell& c : region) used_[g_.index(c.x, c.y)] = 1;
  }

  // LSD-style refinement: first regrow with a tolerance estimated from the
  // angles near the seed, then shrink the region radius until dense enough.
  bool refine(std::vector<Cell>& region, RegionRect& rect, double density_threshold) {
    if (density(region, rect) >= density_threshold) return true;

    const Cell seed = region.front();
    const std::size_t si = g_.index(seed.x, seed.y);
    const double sx = g_.gx[si], sy = g_.gy[si];
    double sum = 0.0, sum2 = 0.0;
    int n = 0;
    for (const Cell& c : region) {
      if (std::hypot(c.x - seed.x, c.y - seed.y) < rect.width) {
        const std::size_t i = g_.index(c.x, c.y);
        const double d = std::atan2(sx * g_.gy[i] - sy * g_.gx[i], sx * g_.gx[i] + sy * g_.gy[i]);
        sum += d;
        sum2 += d * d;
        ++n;
      }
    }
    release(region);
    const double mean = sum / n;
    const double tol = 2.0 * std::sqrt(std::max(0.0, sum2 / n - mean * mean));
    double rx = 0.0, ry = 0.0;
    grow(seed, std::max(tol, 1e-3), region, rx, ry);
    if (region.size() < 2) return false;
    rect = fit(region);
    if (density(region, rect) >= density_threshold) return true;

    double radius = std::max(distance(GradientField::location(seed.x, seed.y), rect.p1),
                             distance(GradientField::location(seed.x, seed.y), rect.p2));
    while (density(region, rect) < density_threshold) {
      radius *= 0.75;
      std::vector<Cell> kept;
      kept.reserve(region.size());
      for (const Cell& c : region) {
        if (std::hypot(c.x - seed.x, c.y - seed.y) <= radius)
          kept.push_back(c);
        else
          used_[g_.index(c.x, c.y)] = 0;
      }
      region.swap(kept);
      if (region.size() < 2) return false;
      rect = fit(region);
    }
    return true;
  }

 private:
  const GradientField& g_;
  std::vector<std::uint8_t>& used_;
};

}  // namespace detail

/// Detect oriented segments in one channel. Segments are directed so that the
/// brighter side of the edge is on the left of a->b.
inline std::vector<OrientedSegment> detect_segments(const GrayImage& img,
                                                    const DetectorParams& params,
                                                    int channel = 0) {
  params.validate();
  if (img.width < kMinDetectorImageSide || img.height < kMinDetectorImageSide)
    throw Error(ErrorCode::ImageTooSmall, "line detection needs at least 16x16 pixels");

  const GrayImage smooth = gaussian_blur(img, params.smoothing_sigma);
  const double gate = params.gradient_threshold / std::sin(params.angle_tolerance);
  const detail::GradientField g = detail::compute_gradient(smooth, gate);

  std::vector<std::uint32_t> order;
  order.reserve(g.mag.size());
  for (std::uint32_t i = 0; i < g.mag.size(); ++i)
    if (g.valid[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::uint32_t a, std::uint32_t b) { return g.mag[a] > g.mag[b]; });

  std::vector<std::uint8_t> used(g.mag.size(), 0);
  detail::RegionGrower grower(g, used);
  std::vector<detail::Cell> region;
  std::vector<OrientedSegment> out;

  for (const std::uint32_t idx : order) {
    if (used[idx]) continue;
    const detail::Cell seed{static_cast<int>(idx % g.width), static_cast<int>(idx / g.width)};
    double rx = 0.0, ry = 0.0;
    grower.grow(seed, params.angle_tolerance, region, rx, ry);
    if (static_cast<double>(region.size()) < params.min_length * 0.5) continue;
    detail::RegionRect rect = grower.fit(region);
    if (!grower.refine(region, rect, params.density_threshold)) continue;
    if (distance(rect.p1, rect.p2) < params.min_length) continue;

    // Orient so that the mean gradient (towards brighter) points left.
    const Point2 left_of_p1p2{(rect.p2 - rect.p1).y, -(rect.p2 - rect.p1).x};
    OrientedSegment s{rect.p1, rect.p2, channel};
    if (dot(left_of_p1p2, rect.mean_gradient) < 0.0) std::swap(s.a, s.b);
    out.push_back(s);
  }

  // Remove near duplicates: both endpoints within 1 px and direction within 1 degree.
  std::vector<OrientedSegment> unique;
  unique.reserve(out.size());
  const double one_degree = kPi / 180.0;
  for (const OrientedSegment& s : out) {
    const bool dup = std::any_of(unique.begin(), unique.end(), [&](const OrientedSegment& u) {
      const Point2 ds = s.direction(), du = u.direction();
      return distance(s.a, u.a) <= 1.0 && distance(s.b, u.b) <= 1.0 &&
             detail::angle_between(ds.x, ds.y, du.x, du.y) <= one_degree;
    });
    if (!dup) unique.push_back(s);
  }
  return unique;
}

/// Run the detector on every channel independently and concatenate the results,
/// tagging each segment with its channel index.
inline std::vector<OrientedSegment> detect_all_channels(const ColorImage& img,
                                                        const DetectorParams& params) {
  for (const GrayImage& c : img.channels)
    if (c.width != img.width() || c.height != img.height())
      throw Error(ErrorCode::ChannelSizeMismatch, "channels differ in size");
  std::vector<OrientedSegment> all;
  for (int c = 0; c < img.channel_count(); ++c) {
    auto segs = detect_segments(img.channels[c], params, c);
    all.insert(all.end(), segs.begin(), segs.end());
  }
  return all;
}

}  // namespace slsmil
