#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace semloc {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 p) { return {s * p.x, s * p.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;

  double norm2() const { return x * x + y * y; }
};

using Polygon = std::vector<Point2>;

struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  bool contains(Point2 p, double tol = 0.0) const {
    return p.x >= xmin - tol && p.x <= xmax + tol && p.y >= ymin - tol && p.y <= ymax + tol;
  }
};

/// Shoelace area, positive for counter-clockwise vertex order.
inline double signed_area(std::span<const Point2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& a = poly[i];
    const Point2& b = poly[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

inline double polygon_area(std::span<const Point2> poly) { return std::abs(signed_area(poly)); }

inline Point2 rotate_point(Point2 p, Point2 center, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const Point2 d = p - center;
  return {center.x + c * d.x - s * d.y, center.y + s * d.x + c * d.y};
}

inline Polygon rotate_polygon(std::span<const Point2> poly, Point2 center, double angle) {
  Polygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) out.push_back(rotate_point(p, center, angle));
  return out;
}

inline Polygon translate_polygon(std::span<const Point2> poly, Point2 offset) {
  Polygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) out.push_back(p + offset);
  return out;
}

namespace detail {

// Keeps the side where side(p) >= 0. `snap` pins new intersection vertices
// onto the boundary line exactly (used for axis-aligned edges).
template <typename Side, typename Snap>
Polygon clip_against(std::span<const Point2> poly, Side side, Snap snap) {
  Polygon out;
  const std::size_t n = poly.size();
  if (n == 0) return out;
  out.reserve(n + 4);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2& cur = poly[i];
    const Point2& nxt = poly[(i + 1) % n];
    const double sc = side(cur);
    const double sn = side(nxt);
    const bool in_cur = sc >= 0.0;
    const bool in_nxt = sn >= 0.0;
    if (in_cur) out.push_back(cur);
    if (in_cur != in_nxt) {
      const double t = sc / (sc - sn);
      out.push_back(snap(cur + t * (nxt - cur)));
    }
  }
  return out;
}

inline Polygon drop_repeats(Polygon poly) {
  Polygon out;
  out.reserve(poly.size());
  for (const auto& p : poly) {
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  }
  while (out.size() > 1 && out.front() == out.back()) out.pop_back();
  return out;
}

}  // namespace detail

/// Sutherland-Hodgman clip against an axis-aligned rectangle. Output vertices
/// created on an edge are snapped exactly onto that edge.
inline Polygon clip_to_rect(std::span<const Point2> poly, const Rect& r) {
  Polygon p(poly.begin(), poly.end());
  p = detail::clip_against(p, [&](Point2 q) { return q.x - r.xmin; },
                           [&](Point2 q) { return Point2{r.xmin, q.y}; });
  p = detail::clip_against(p, [&](Point2 q) { return r.xmax - q.x; },
                           [&](Point2 q) { return Point2{r.xmax, q.y}; });
  p = detail::clip_against(p, [&](Point2 q) { return q.y - r.ymin; },
                           [&](Point2 q) { return Point2{std::clamp(q.x, r.xmin, r.xmax), r.ymin}; });
  p = detail::clip_against(p, [&](Point2 q) { return r.ymax - q.y; },
                           [&](Point2 q) { return Point2{std::clamp(q.x, r.xmin, r.xmax), r.ymax}; });
  return detail::drop_repeats(std::move(p));
}

/// Clip against a convex polygon given in counter-clockwise order.
inline Polygon clip_to_convex(std::span<const Point2> poly, std::span<const Point2> window) {
  Polygon p(poly.begin(), poly.end());
  const std::size_t m = window.size();
  for (std::size_t i = 0; i < m && !p.empty(); ++i) {
    const Point2 a = window[i];
    const Point2 b = window[(i + 1) % m];
    const Point2 e = b - a;
    p = detail::clip_against(
        p, [&](Point2 q) { return e.x * (q.y - a.y) - e.y * (q.x - a.x); }, [](Point2 q) { return q; });
  }
  return detail::drop_repeats(std::move(p));
}

/// Andrew's monotone chain; returns the hull counter-clockwise without collinear points.
inline Polygon convex_hull(std::vector<Point2> pts) {
  std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  auto cross = [](Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); };
  Polygon hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[i]) <= 0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(hull[k - 2], hull[k - 1], pts[i - 1]) <= 0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

/// Axis-aligned square of the given side centred on `c`, counter-clockwise.
inline Polygon square_around(Point2 c, double side) {
  const double h = 0.5 * side;
  return {{c.x - h, c.y - h}, {c.x + h, c.y - h}, {c.x + h, c.y + h}, {c.x - h, c.y + h}};
}

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

}  // namespace semloc
