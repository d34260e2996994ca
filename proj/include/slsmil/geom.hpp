#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <tuple>
#include <vector>

#include "slsmil/error.hpp"

namespace slsmil {

inline constexpr double kPi = std::numbers::pi;

/// Map an angle to (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  constexpr Point2() = default;
  Point2(double x_, double y_) : x(x_), y(y_) {
    if (!std::isfinite(x_) || !std::isfinite(y_))
      throw Error(ErrorCode::InvalidArgument, "non-finite point coordinate");
  }

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend Point2 operator*(Point2 a, double s) { return {s * a.x, s * a.y}; }
  friend Point2 operator/(Point2 a, double s) { return {a.x / s, a.y / s}; }
  friend bool operator==(Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }
inline double distance(Point2 a, Point2 b) { return norm(a - b); }

/// Rotate `p` about the origin by `angle` radians.
inline Point2 rotate(Point2 p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

/// Directed segment. The side of brighter intensity lies to the left of a->b
/// (left meaning the direction (dy, -dx) in image coordinates, y down).
struct OrientedSegment {
  Point2 a;
  Point2 b;
  int channel = 0;

  double length() const { return distance(a, b); }
  Point2 direction() const { return b - a; }
  Point2 midpoint() const { return 0.5 * (a + b); }
};

struct OrientedSquare {
  Point2 center;
  double side = 1.0;
  double theta = 0.0;  // (-pi, pi]

  OrientedSquare() = default;
  OrientedSquare(Point2 c, double s, double t)
      : center(c), side(s), theta(normalize_angle(t)) {
    if (!(s > 0.0) || !std::isfinite(s))
      throw Error(ErrorCode::InvalidArgument, "square side must be positive");
    if (!std::isfinite(t))
      throw Error(ErrorCode::InvalidArgument, "non-finite square angle");
  }

  double area() const { return side * side; }
  /// Radius of the circumscribed circle.
  double circumradius() const { return side * std::numbers::sqrt2 / 2.0; }
};

struct Aabb {
  double x_min = 0.0, y_min = 0.0, x_max = 1.0, y_max = 1.0;

  Aabb() = default;
  Aabb(double x0, double y0, double x1, double y1)
      : x_min(x0), y_min(y0), x_max(x1), y_max(y1) {
    if (!(x0 < x1) || !(y0 < y1))
      throw Error(ErrorCode::InvalidArgument, "degenerate axis-aligned box");
  }

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const { return width() * height(); }
  Point2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  double circumradius() const { return 0.5 * std::hypot(width(), height()); }
};

inline constexpr double kGeomTolerance = 1e-9;

/// Signed shoelace area; positive for counter-clockwise order (in the
/// mathematical sense of the coordinate frame).
inline double signed_area(const std::vector<Point2>& v) {
  double s = 0.0;
  for (std::size_t i = 0, n = v.size(); i < n; ++i)
    s += cross(v[i], v[(i + 1) % n]);
  return 0.5 * s;
}

class ConvexPolygon {
 public:
  /// Validates: >= 3 vertices, counter-clockwise, convex within tolerance.
  explicit ConvexPolygon(std::vector<Point2> vertices) : v_(std::move(vertices)) {
    if (v_.size() < 3)
      throw Error(ErrorCode::InvalidArgument, "polygon needs at least 3 vertices");
    if (signed_area(v_) <= 0.0)
      throw Error(ErrorCode::InvalidArgument, "polygon must be counter-clockwise");
    const std::size_t n = v_.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 e0 = v_[(i + 1) % n] - v_[i];
      const Point2 e1 = v_[(i + 2) % n] - v_[(i + 1) % n];
      if (cross(e0, e1) < -kGeomTolerance * std::max(1.0, norm(e0) * norm(e1)))
        throw Error(ErrorCode::InvalidArgument, "polygon is not convex");
    }
  }

  static ConvexPolygon unchecked(std::vector<Point2> vertices) {
    ConvexPolygon p;
    p.v_ = std::move(vertices);
    return p;
  }

  const std::vector<Point2>& vertices() const { return v_; }
  std::size_t size() const { return v_.size(); }

 private:
  ConvexPolygon() = default;
  std::vector<Point2> v_;
};

/// Mirror image of `p` across the infinite line through axis_a and axis_b.
inline Point2 reflect_point(Point2 p, Point2 axis_a, Point2 axis_b) {
  const Point2 d = axis_b - axis_a;
  const double len = norm(d);
  if (len <= kGeomTolerance)
    throw Error(ErrorCode::DegenerateAxis, "symmetry axis points coincide");
  const Point2 u = d / len;
  const Point2 foot = axis_a + dot(p - axis_a, u) * u;
  return 2.0 * foot - p;
}

inline ConvexPolygon square_to_polygon(const OrientedSquare& s) {
  const double h = 0.5 * s.side;
  const Point2 u{std::cos(s.theta) * h, std::sin(s.theta) * h};
  const Point2 n{-u.y, u.x};
  const Point2 c = s.center;
  return ConvexPolygon::unchecked({c - u - n, c + u - n, c + u + n, c - u + n});
}

inline ConvexPolygon box_to_polygon(const Aabb& b) {
  return ConvexPolygon::unchecked(
      {{b.x_min, b.y_min}, {b.x_max, b.y_min}, {b.x_max, b.y_max}, {b.x_min, b.y_max}});
}

inline double polygon_area(const ConvexPolygon& p) {
  return std::max(0.0, signed_area(p.vertices()));
}

namespace detail {

// Drop repeated and collinear vertices so area stays stable under noise.
inline std::vector<Point2> simplify_ring(std::vector<Point2> v) {
  bool changed = true;
  while (changed && v.size() >= 3) {
    changed = false;
    for (std::size_t i = 0; i < v.size() && v.size() >= 3; ++i) {
      const std::size_t n = v.size();
      const Point2& prev = v[(i + n - 1) % n];
      const Point2& cur = v[i];
      const Point2& next = v[(i + 1) % n];
      const Point2 e0 = cur - prev, e1 = next - cur;
      const double scale = std::max(1.0, norm(e0) * norm(e1));
      if (norm(e0) <= kGeomTolerance || std::abs(cross(e0, e1)) <= kGeomTolerance * scale) {
        v.erase(v.begin() + static_cast<std::ptrdiff_t>(i));
        changed = true;
        break;
      }
    }
  }
  return v;
}

}  // namespace detail

/// Intersection of two convex polygons (Sutherland-Hodgman against each clip
/// edge). Returns nullopt when the overlap has no interior.
inline std::optional<ConvexPolygon> clip_convex(const ConvexPolygon& subject,
                                                const ConvexPolygon& clip) {
  std::vector<Point2> out = subject.vertices();
  const auto& cv = clip.vertices();
  const std::size_t m = cv.size();
  std::vector<Point2> in;
  for (std::size_t e = 0; e < m && !out.empty(); ++e) {
    const Point2 a = cv[e];
    const Point2 b = cv[(e + 1) % m];
    const Point2 edge = b - a;
    const double scale = std::max(1.0, norm(edge));
    auto side = [&](Point2 p) { return cross(edge, p - a) / scale; };
    in.swap(out);
    out.clear();
    const std::size_t n = in.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 p = in[i];
      const Point2 q = in[(i + 1) % n];
      const double sp = side(p), sq = side(q);
      const bool p_in = sp >= -kGeomTolerance;
      const bool q_in = sq >= -kGeomTolerance;
      if (p_in) out.push_back(p);
      if (p_in != q_in && std::abs(sp - sq) > 0.0) {
        const double t = sp / (sp - sq);
        if (t > 0.0 && t < 1.0) out.push_back(p + t * (q - p));
      }
    }
  }
  out = detail::simplify_ring(std::move(out));
  if (out.size() < 3 || signed_area(out) <= kGeomTolerance) return std::nullopt;
  return ConvexPolygon::unchecked(std::move(out));
}

namespace detail {

inline double iou_polygons(const ConvexPolygon& a, double area_a,
                           const ConvexPolygon& b, double area_b) {
  const auto inter = clip_convex(a, b);
  if (!inter) return 0.0;
  const double ia = std::min(polygon_area(*inter), std::min(area_a, area_b));
  const double uni = area_a + area_b - ia;
  if (uni <= 0.0) return 0.0;
  return std::clamp(ia / uni, 0.0, 1.0);
}

}  // namespace detail

/// Intersection over union of two oriented squares / axis-aligned boxes,
/// computed by exact convex clipping. Symmetric in its arguments: the operand
/// order is canonicalised before clipping.
inline double iou(const OrientedSquare& a, const OrientedSquare& b) {
  if (distance(a.center, b.center) > a.circumradius() + b.circumradius()) return 0.0;
  const bool swap = std::tie(b.center.x, b.center.y, b.side, b.theta) <
                    std::tie(a.center.x, a.center.y, a.side, a.theta);
  const OrientedSquare& p = swap ? b : a;
  const OrientedSquare& q = swap ? a : b;
  return detail::iou_polygons(square_to_polygon(p), p.area(), square_to_polygon(q), q.area());
}

inline double iou(const OrientedSquare& a, const Aabb& b) {
  if (distance(a.center, b.center()) > a.circumradius() + b.circumradius()) return 0.0;
  return detail::iou_polygons(square_to_polygon(a), a.area(), box_to_polygon(b), b.area());
}

inline double iou(const Aabb& a, const OrientedSquare& b) { return iou(b, a); }

inline double iou(const Aabb& a, const Aabb& b) {
  const double w = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double h = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (w <= 0.0 || h <= 0.0) return 0.0;
  const double inter = w * h;
  return inter / (a.area() + b.area() - inter);
}

}  // namespace slsmil
