#pragma once

// Exact geometry for oriented rectangles and axis-aligned boxes. Rotated
// intersection goes through Sutherland-Hodgman clipping followed by the
// shoelace formula, which is exact for convex inputs. All math is double
// precision regardless of network precision: metric decisions near the
// 25% / 30-degree thresholds must be stable.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "stackgrasp/scene.hpp"

namespace stackgrasp {

constexpr double kGeomEps = 1e-9;  // on-boundary points count as inside

struct Vec2 {
  double x = 0, y = 0;
};

// Ordered CCW vertex list, at least 3 vertices.
struct ConvexPolygon {
  std::vector<Vec2> vertices;
};

inline double shoelace_area(const std::vector<Vec2>& v) {
  double acc = 0;
  size_t n = v.size();
  for (size_t i = 0; i < n; ++i) {
    const Vec2& a = v[i];
    const Vec2& b = v[(i + 1) % n];
    acc += a.x * b.y - b.x * a.y;
  }
  return 0.5 * acc;
}

inline double polygon_area(const ConvexPolygon& p) {
  if (p.vertices.size() < 3) return 0.0;
  return std::abs(shoelace_area(p.vertices));
}

// Four CCW corners of an oriented rectangle. Corner order starts at the
// (-w/2, -h/2) corner in the rectangle frame.
inline ConvexPolygon rect_to_polygon(const GraspRect& r) {
  double rad = r.theta_deg * M_PI / 180.0;
  double c = std::cos(rad), s = std::sin(rad);
  double hw = 0.5 * r.w, hh = 0.5 * r.h;
  std::array<Vec2, 4> local{{{-hw, -hh}, {hw, -hh}, {hw, hh}, {-hw, hh}}};
  ConvexPolygon out;
  out.vertices.reserve(4);
  for (const Vec2& p : local)
    out.vertices.push_back({r.cx + c * p.x - s * p.y, r.cy + s * p.x + c * p.y});
  return out;
}

namespace detail {

// signed distance of p left of directed edge a->b (positive = inside for CCW)
inline double edge_side(const Vec2& a, const Vec2& b, const Vec2& p) {
  return (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
}

inline Vec2 line_intersect(const Vec2& a, const Vec2& b, const Vec2& p, const Vec2& q) {
  double a1 = b.y - a.y, b1 = a.x - b.x, c1 = a1 * a.x + b1 * a.y;
  double a2 = q.y - p.y, b2 = p.x - q.x, c2 = a2 * p.x + b2 * p.y;
  double det = a1 * b2 - a2 * b1;
  if (std::abs(det) < 1e-30) return p;  // parallel; caller only hits this on slivers
  return {(b2 * c1 - b1 * c2) / det, (a1 * c2 - a2 * c1) / det};
}

}  // namespace detail

// Clips `subject` against every half-plane of convex CCW `clip`.
inline ConvexPolygon clip_convex(const ConvexPolygon& subject, const ConvexPolygon& clip) {
  std::vector<Vec2> poly = subject.vertices;
  size_t m = clip.vertices.size();
  for (size_t i = 0; i < m && !poly.empty(); ++i) {
    const Vec2& a = clip.vertices[i];
    const Vec2& b = clip.vertices[(i + 1) % m];
    std::vector<Vec2> next;
    next.reserve(poly.size() + 4);
    size_t n = poly.size();
    for (size_t j = 0; j < n; ++j) {
      const Vec2& cur = poly[j];
      const Vec2& nxt = poly[(j + 1) % n];
      double dc = detail::edge_side(a, b, cur);
      double dn = detail::edge_side(a, b, nxt);
      bool cin = dc >= -kGeomEps;
      bool nin = dn >= -kGeomEps;
      if (cin) next.push_back(cur);
      if (cin != nin) next.push_back(detail::line_intersect(a, b, cur, nxt));
    }
    poly.swap(next);
  }
  return ConvexPolygon{std::move(poly)};
}

inline double convex_intersection_area(const ConvexPolygon& a, const ConvexPolygon& b) {
  ConvexPolygon inter = clip_convex(a, b);
  if (inter.vertices.size() < 3) return 0.0;
  return std::abs(shoelace_area(inter.vertices));
}

// Jaccard index of two oriented rectangles: |A∩B| / |A∪B|.
inline double jaccard_rotated(const GraspRect& r1, const GraspRect& r2) {
  double a1 = r1.w * r1.h;
  double a2 = r2.w * r2.h;
  double inter = convex_intersection_area(rect_to_polygon(r1), rect_to_polygon(r2));
  inter = std::min(inter, std::min(a1, a2));
  double uni = a1 + a2 - inter;
  if (uni <= 0) return 0.0;
  return inter / uni;
}

// Distance between two line orientations under 180-degree periodicity,
// result in [0, 90].
inline double grasp_angle_diff(double t1_deg, double t2_deg) {
  double d = std::fmod(std::abs(t1_deg - t2_deg), 180.0);
  return std::min(d, 180.0 - d);
}

inline double aabb_iou(const ObjectBox& a, const ObjectBox& b) {
  double ix = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double iy = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (ix <= 0 || iy <= 0) return 0.0;
  double inter = ix * iy;
  double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

// Smallest axis-aligned box containing both. Keeps a's id/cls/score.
inline ObjectBox box_union(const ObjectBox& a, const ObjectBox& b) {
  ObjectBox u = a;
  u.x1 = std::min(a.x1, b.x1);
  u.y1 = std::min(a.y1, b.y1);
  u.x2 = std::max(a.x2, b.x2);
  u.y2 = std::max(a.y2, b.y2);
  return u;
}

// Overlap box when it has positive area, otherwise empty.
inline std::optional<ObjectBox> box_intersection(const ObjectBox& a, const ObjectBox& b) {
  ObjectBox r = a;
  r.x1 = std::max(a.x1, b.x1);
  r.y1 = std::max(a.y1, b.y1);
  r.x2 = std::min(a.x2, b.x2);
  r.y2 = std::min(a.y2, b.y2);
  if (r.x1 >= r.x2 || r.y1 >= r.y2) return std::nullopt;
  return r;
}

}  // namespace stackgrasp
