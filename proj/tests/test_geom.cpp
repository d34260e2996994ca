#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "slsmil/geom.hpp"
#include "oracles.hpp"

using namespace slsmil;

TEST(Reflect, MirrorAcrossVerticalAxis) {
  const Point2 q = reflect_point({1, 0}, {0, 0}, {0, 1});
  EXPECT_NEAR(q.x, -1.0, 1e-12);
  EXPECT_NEAR(q.y, 0.0, 1e-12);
}

TEST(Reflect, PointOnAxisIsFixed) {
  const Point2 q = reflect_point({0.5, 1.0}, {0, 0}, {1, 2});
  EXPECT_NEAR(q.x, 0.5, 1e-12);
  EXPECT_NEAR(q.y, 1.0, 1e-12);
}

TEST(Reflect, SkewedAxisMatchesOracle) {
  const Point2 q = reflect_point({1.2, 2}, {0, 0}, {0.1, 2});
  EXPECT_NEAR(q.x, -0.9945, 1e-3);
  EXPECT_NEAR(q.y, 2.1097, 1e-3);
  const auto o = oracle::reflect(1.2, 2, 0, 0, 0.1, 2);
  EXPECT_NEAR(q.x, o[0], 1e-12);
  EXPECT_NEAR(q.y, o[1], 1e-12);
}

TEST(Reflect, DegenerateAxisThrows) {
  try {
    reflect_point({1, 1}, {2, 2}, {2, 2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateAxis);
  }
}

TEST(Reflect, InvolutionOnRandomInputs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-100, 100);
  for (int i = 0; i < 2000; ++i) {
    const Point2 p{u(rng), u(rng)}, a{u(rng), u(rng)}, b{u(rng), u(rng)};
    if (distance(a, b) < 1e-3) continue;
    const Point2 r = reflect_point(reflect_point(p, a, b), a, b);
    EXPECT_LT(distance(r, p), 1e-9);
  }
}

TEST(SquarePolygon, AxisAlignedCorners) {
  const auto v = square_to_polygon(OrientedSquare({0, 0}, 2, 0)).vertices();
  ASSERT_EQ(v.size(), 4u);
  for (const Point2 expect : {Point2{-1, -1}, Point2{1, -1}, Point2{1, 1}, Point2{-1, 1}}) {
    bool found = false;
    for (const Point2 p : v) found |= distance(p, expect) < 1e-12;
    EXPECT_TRUE(found);
  }
  EXPECT_GT(signed_area(v), 0.0);
}

TEST(SquarePolygon, RotatedCornersAndQuarterTurn) {
  const double r2 = std::sqrt(2.0);
  const auto v = square_to_polygon(OrientedSquare({0, 0}, 2, kPi / 4)).vertices();
  for (const Point2 expect : {Point2{r2, 0}, Point2{0, r2}, Point2{-r2, 0}, Point2{0, -r2}}) {
    bool found = false;
    for (const Point2 p : v) found |= distance(p, expect) < 1e-9;
    EXPECT_TRUE(found);
  }
  const auto a = square_to_polygon(OrientedSquare({3, 4}, 5, 0)).vertices();
  const auto b = square_to_polygon(OrientedSquare({3, 4}, 5, kPi / 2)).vertices();
  for (const Point2 p : a) {
    bool found = false;
    for (const Point2 q : b) found |= distance(p, q) < 1e-9;
    EXPECT_TRUE(found);
  }
}

TEST(SquarePolygon, CornersOnCircumcircle) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10), s(0.1, 50), t(-4, 4);
  for (int i = 0; i < 200; ++i) {
    const OrientedSquare sq({u(rng), u(rng)}, s(rng), t(rng));
    const ConvexPolygon poly = square_to_polygon(sq);
    for (const Point2 p : poly.vertices())
      EXPECT_NEAR(distance(p, sq.center), sq.circumradius(), 1e-9 * sq.side);
  }
}

TEST(Polygon, ValidationRejectsBadRings) {
  EXPECT_THROW(ConvexPolygon({{0, 0}, {1, 0}}), Error);
  EXPECT_THROW(ConvexPolygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}}), Error);
  EXPECT_THROW(ConvexPolygon({{0, 0}, {2, 0}, {1, 0.2}, {2, 2}, {0, 2}}), Error);
  EXPECT_NO_THROW(ConvexPolygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}}));
}

TEST(Polygon, Areas) {
  EXPECT_DOUBLE_EQ(polygon_area(ConvexPolygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}})), 1.0);
  EXPECT_DOUBLE_EQ(polygon_area(ConvexPolygon({{0, 0}, {2, 0}, {0, 2}})), 2.0);
}

TEST(Clip, IdenticalDisjointAndOctagon) {
  const auto a = square_to_polygon(OrientedSquare({0, 0}, 2, 0));
  const auto same = clip_convex(a, a);
  ASSERT_TRUE(same.has_value());
  EXPECT_NEAR(polygon_area(*same), 4.0, 1e-9);

  const auto far = square_to_polygon(OrientedSquare({10, 10}, 1, 0));
  EXPECT_FALSE(clip_convex(square_to_polygon(OrientedSquare({0, 0}, 1, 0)), far).has_value());

  const auto oct = clip_convex(a, square_to_polygon(OrientedSquare({0, 0}, 2, kPi / 4)));
  ASSERT_TRUE(oct.has_value());
  EXPECT_EQ(oct->size(), 8u);
  EXPECT_NEAR(polygon_area(*oct), 8.0 * (std::sqrt(2.0) - 1.0), 1e-6);
  EXPECT_GT(signed_area(oct->vertices()), 0.0);
}

TEST(Clip, AreaBoundedByInputs) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-5, 5), s(0.5, 8), t(-4, 4);
  for (int i = 0; i < 500; ++i) {
    const OrientedSquare a({u(rng), u(rng)}, s(rng), t(rng)), b({u(rng), u(rng)}, s(rng), t(rng));
    const auto c = clip_convex(square_to_polygon(a), square_to_polygon(b));
    if (c) {
      EXPECT_LE(polygon_area(*c), std::min(a.area(), b.area()) + 1e-9);
    }
  }
}

TEST(Iou, BasicCases) {
  const OrientedSquare a({0, 0}, 2, 0);
  EXPECT_NEAR(iou(a, a), 1.0, 1e-9);
  EXPECT_EQ(iou(a, OrientedSquare({50, 50}, 2, 0.3)), 0.0);
  EXPECT_NEAR(iou(a, OrientedSquare({0, 0}, 2, kPi / 4)), 0.7071, 1e-4);
  const double oct = 8.0 * (std::sqrt(2.0) - 1.0);
  EXPECT_NEAR(iou(a, OrientedSquare({0, 0}, 2, kPi / 4)), oct / (8.0 - oct), 1e-9);
  EXPECT_NEAR(iou(Aabb(0, 0, 2, 2), Aabb(1, 0, 3, 2)), 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(iou(OrientedSquare({1, 1}, 2, 0), Aabb(0, 0, 2, 2)), 1.0, 1e-9);
}

TEST(Iou, MonteCarloOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3), s(1, 6), t(-kPi, kPi);
  for (int i = 0; i < 40; ++i) {
    const OrientedSquare a({u(rng), u(rng)}, s(rng), t(rng));
    if (i % 2 == 0) {
      const OrientedSquare b({u(rng), u(rng)}, s(rng), t(rng));
      EXPECT_NEAR(iou(a, b), oracle::monte_carlo_iou(a, b, 200000, rng), 0.01);
    } else {
      const double x = u(rng), y = u(rng);
      const Aabb b(x, y, x + s(rng), y + s(rng));
      EXPECT_NEAR(iou(a, b), oracle::monte_carlo_iou(a, b, 200000, rng), 0.01);
    }
  }
}

TEST(Iou, SymmetricBoundedAndRigidInvariant) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-4, 4), s(0.5, 6), t(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const OrientedSquare a({u(rng), u(rng)}, s(rng), t(rng)), b({u(rng), u(rng)}, s(rng), t(rng));
    const double v = iou(a, b);
    EXPECT_EQ(v, iou(b, a));
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    const double phi = t(rng);
    const Point2 shift{u(rng) * 10, u(rng) * 10};
    const OrientedSquare ra(rotate(a.center, phi) + shift, a.side, a.theta + phi);
    const OrientedSquare rb(rotate(b.center, phi) + shift, b.side, b.theta + phi);
    EXPECT_NEAR(iou(ra, rb), v, 1e-6);
  }
}

TEST(Geometry, NormalizeAngleRange) {
  for (double a = -20; a < 20; a += 0.37) {
    const double n = normalize_angle(a);
    EXPECT_GT(n, -kPi);
    EXPECT_LE(n, kPi);
    EXPECT_NEAR(std::remainder(n - a, 2 * kPi), 0.0, 1e-12);
  }
  EXPECT_DOUBLE_EQ(normalize_angle(-kPi), kPi);
}

TEST(Geometry, InvalidShapesThrow) {
  EXPECT_THROW(OrientedSquare({0, 0}, 0, 0), Error);
  EXPECT_THROW(OrientedSquare({0, 0}, 1, NAN), Error);
  EXPECT_THROW(Aabb(1, 0, 1, 2), Error);
  EXPECT_THROW(Point2(INFINITY, 0), Error);
}
