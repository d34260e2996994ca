#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "slsmil/linedet.hpp"

using namespace slsmil;

namespace {

// Area-sampled rendering of an indicator function (4x4 supersampling).
GrayImage render(int w, int h, const std::function<bool(double, double)>& in, double fg = 0.8,
                 double bg = 0.2) {
  GrayImage img(w, h, bg);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int hits = 0;
      for (int sy = 0; sy < 4; ++sy)
        for (int sx = 0; sx < 4; ++sx) hits += in(x + (sx + 0.5) / 4, y + (sy + 0.5) / 4);
      img.at(x, y) = bg + (fg - bg) * hits / 16.0;
    }
  return img;
}

double direction_angle(const OrientedSegment& s) { return std::atan2(s.direction().y, s.direction().x); }

double angle_diff(double a, double b) { return std::abs(normalize_angle(a - b)); }

GrayImage rotate90(const GrayImage& img) {
  // (x, y) -> (H - 1 - y, x): a quarter turn in image coordinates.
  GrayImage out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(img.height - 1 - y, x) = img.at(x, y);
  return out;
}

}  // namespace

TEST(LineDetector, BlankImageHasNoSegments) {
  EXPECT_TRUE(detect_segments(GrayImage(64, 64, 0.5), DetectorParams{}).empty());
}

TEST(LineDetector, TooSmallImageThrows) {
  try {
    detect_segments(GrayImage(15, 64, 0.5), DetectorParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ImageTooSmall);
  }
}

TEST(LineDetector, VerticalStepEdge) {
  const GrayImage img = render(64, 64, [](double x, double) { return x >= 32; });
  const auto segs = detect_segments(img, DetectorParams{});
  ASSERT_EQ(segs.size(), 1u);
  const OrientedSegment& s = segs[0];
  // Bright on the right, so the brighter-left direction points down (+y).
  EXPECT_LT(angle_diff(direction_angle(s), kPi / 2), 3 * kPi / 180);
  EXPECT_LT(distance(s.a, {32, 0}), 2.0);
  EXPECT_LT(distance(s.b, {32, 64}), 2.0);
  EXPECT_GE(s.length(), DetectorParams{}.min_length);
}

TEST(LineDetector, StrokeGivesTwoAntiParallelSides) {
  const double ang = 30 * kPi / 180;
  const Point2 c{48, 48}, u{std::cos(ang), std::sin(ang)};
  const GrayImage img = render(96, 96, [&](double x, double y) {
    const Point2 d = Point2{x, y} - c;
    return std::abs(dot(d, u)) <= 20 && std::abs(cross(u, d)) <= 2.5;
  });
  const auto segs = detect_segments(img, DetectorParams{});
  std::vector<OrientedSegment> sides;
  for (const auto& s : segs)
    if (s.length() > 25) sides.push_back(s);
  ASSERT_EQ(sides.size(), 2u);
  EXPECT_LT(angle_diff(direction_angle(sides[0]), direction_angle(sides[1]) + kPi), 3 * kPi / 180);
  for (const auto& s : sides) {
    const double a = direction_angle(s);
    EXPECT_TRUE(angle_diff(a, ang) < 3 * kPi / 180 || angle_diff(a, ang + kPi) < 3 * kPi / 180);
  }
}

TEST(LineDetector, SegmentsHaveMinLengthAndNoDuplicates) {
  const GrayImage img = render(96, 96, [](double x, double y) {
    return (x - 48) * (x - 48) / 900 + (y - 40) * (y - 40) / 300 <= 1 || (x > 10 && x < 30 && y > 60 && y < 90);
  });
  const DetectorParams p;
  const auto segs = detect_segments(img, p);
  ASSERT_FALSE(segs.empty());
  for (std::size_t i = 0; i < segs.size(); ++i) {
    EXPECT_GE(segs[i].length(), p.min_length);
    for (std::size_t j = i + 1; j < segs.size(); ++j) {
      const bool dup = distance(segs[i].a, segs[j].a) <= 1 && distance(segs[i].b, segs[j].b) <= 1 &&
                       angle_diff(direction_angle(segs[i]), direction_angle(segs[j])) <= kPi / 180;
      EXPECT_FALSE(dup);
    }
  }
}

TEST(LineDetector, ContrastFlipReversesDirection) {
  const auto inside = [](double x, double y) { return x > 20 && x < 70 && y > 30 && y < 60; };
  const GrayImage img = render(96, 96, inside);
  GrayImage flipped = img;
  for (double& v : flipped.samples) v = 1.0 - v;
  const auto a = detect_segments(img, DetectorParams{});
  const auto b = detect_segments(flipped, DetectorParams{});
  ASSERT_EQ(a.size(), b.size());
  ASSERT_FALSE(a.empty());
  for (const auto& s : a) {
    bool matched = false;
    for (const auto& t : b)
      matched |= distance(s.a, t.b) < 1.0 && distance(s.b, t.a) < 1.0;
    EXPECT_TRUE(matched);
  }
}

TEST(LineDetector, RotationCovariance) {
  const GrayImage img = render(80, 80, [](double x, double y) {
    return x > 18 && x < 60 && y > 25 && y < 50 && y - 25 < (x - 18) * 1.2;
  });
  const GrayImage rot = rotate90(img);
  const auto a = detect_segments(img, DetectorParams{});
  const auto b = detect_segments(rot, DetectorParams{});
  ASSERT_FALSE(a.empty());
  // Continuous coordinates map as (x, y) -> (H - y, x).
  const auto map = [&](Point2 p) { return Point2{img.height - p.y, p.x}; };
  for (const auto& s : a) {
    if (s.length() < 12) continue;
    bool matched = false;
    for (const auto& t : b) matched |= distance(map(s.a), t.a) < 2.0 && distance(map(s.b), t.b) < 2.0;
    EXPECT_TRUE(matched) << s.a.x << "," << s.a.y << " -> " << s.b.x << "," << s.b.y;
  }
}

TEST(LineDetector, IntensityScalingKeepsEndpoints) {
  const auto inside = [](double x, double y) { return x > 20 && x < 70 && y > 30 && y < 60; };
  const GrayImage img = render(96, 96, inside, 0.6, 0.3);
  const auto base = detect_segments(img, DetectorParams{});
  for (double f : {0.5, 1.5}) {
    GrayImage scaled = img;
    for (double& v : scaled.samples) v *= f;
    DetectorParams p;
    p.gradient_threshold *= f;
    const auto segs = detect_segments(scaled, p);
    ASSERT_EQ(segs.size(), base.size());
    for (const auto& s : base) {
      bool matched = false;
      for (const auto& t : segs) matched |= distance(s.a, t.a) <= 2 && distance(s.b, t.b) <= 2;
      EXPECT_TRUE(matched);
    }
  }
}

TEST(AllChannels, TagsAndCounts) {
  const auto inside = [](double x, double y) { return x > 20 && x < 70 && y > 30 && y < 60; };
  const GrayImage edge = render(96, 96, inside);
  const std::size_t single = detect_segments(edge, DetectorParams{}).size();

  ColorImage same;
  same.channels = {edge, edge, edge};
  const auto all = detect_all_channels(same, DetectorParams{});
  EXPECT_EQ(all.size(), 3 * single);
  for (int c = 0; c < 3; ++c)
    EXPECT_EQ(std::count_if(all.begin(), all.end(), [&](const auto& s) { return s.channel == c; }),
              static_cast<long>(single));

  ColorImage red_only;
  red_only.channels = {edge, GrayImage(96, 96, 0.2), GrayImage(96, 96, 0.2)};
  for (const auto& s : detect_all_channels(red_only, DetectorParams{})) EXPECT_EQ(s.channel, 0);

  EXPECT_TRUE(detect_all_channels(ColorImage(64, 64, 3, 0.4), DetectorParams{}).empty());
}

TEST(AllChannels, SizeMismatchThrows) {
  ColorImage img;
  img.channels = {GrayImage(64, 64), GrayImage(64, 48)};
  try {
    detect_all_channels(img, DetectorParams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ChannelSizeMismatch);
  }
}

TEST(DetectorParams, ValidationRejectsBadValues) {
  DetectorParams p;
  p.angle_tolerance = kPi / 2;
  EXPECT_THROW(p.validate(), Error);
  p = DetectorParams{};
  p.min_length = 0;
  EXPECT_THROW(p.validate(), Error);
}
