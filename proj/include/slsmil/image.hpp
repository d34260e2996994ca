#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "slsmil/error.hpp"

namespace slsmil {

/// Single channel, row-major, intensities nominally in [0, 1]. Pixel (x, y)
/// covers the unit cell [x, x+1) x [y, y+1).
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<double> samples;

  GrayImage() = default;
  GrayImage(int w, int h, double fill = 0.0)
      : width(w), height(h), samples(static_cast<std::size_t>(w) * h, fill) {
    if (w <= 0 || h <= 0) throw Error(ErrorCode::InvalidArgument, "image size must be positive");
  }

  double& at(int x, int y) { return samples[static_cast<std::size_t>(y) * width + x]; }
  double at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
};

/// Planar multi-channel image (1 channel for grayscale input, 3 for RGB).
struct ColorImage {
  std::vector<GrayImage> channels;

  ColorImage() = default;
  ColorImage(int w, int h, int c, double fill = 0.0) : channels(c, GrayImage(w, h, fill)) {}

  int width() const { return channels.empty() ? 0 : channels.front().width; }
  int height() const { return channels.empty() ? 0 : channels.front().height; }
  int channel_count() const { return static_cast<int>(channels.size()); }
};

/// Bilinear sample at continuous coordinate (x, y); pixel centres sit at
/// integer + 0.5. Samples outside the image are zero.
inline double sample_bilinear(const GrayImage& img, double x, double y) {
  const double fx = x - 0.5, fy = y - 0.5;
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const int x0 = static_cast<int>(x0f), y0 = static_cast<int>(y0f);
  const double tx = fx - x0f, ty = fy - y0f;
  auto px = [&](int xi, int yi) { return img.contains(xi, yi) ? img.at(xi, yi) : 0.0; };
  if (x0 >= 0 && y0 >= 0 && x0 + 1 < img.width && y0 + 1 < img.height) {
    const double* r0 = &img.samples[static_cast<std::size_t>(y0) * img.width + x0];
    const double* r1 = r0 + img.width;
    return (1 - ty) * ((1 - tx) * r0[0] + tx * r0[1]) + ty * ((1 - tx) * r1[0] + tx * r1[1]);
  }
  return (1 - ty) * ((1 - tx) * px(x0, y0) + tx * px(x0 + 1, y0)) +
         ty * ((1 - tx) * px(x0, y0 + 1) + tx * px(x0 + 1, y0 + 1));
}

}  // namespace slsmil
