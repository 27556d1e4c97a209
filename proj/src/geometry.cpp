#include "dsp/geometry.hpp"

#include <algorithm>
#include <limits>

namespace dsp {

Affine2 Affine2::rotation(double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c, -s, s, c, 0.0, 0.0};
}

Affine2 Affine2::translation(Vec2 t) { return {1, 0, 0, 1, t.x, t.y}; }

Affine2 Affine2::mirror_x() { return {1, 0, 0, -1, 0, 0}; }

Affine2 Affine2::after(const Affine2& f) const {
  Affine2 r;
  r.a = a * f.a + b * f.c;
  r.b = a * f.b + b * f.d;
  r.c = c * f.a + d * f.c;
  r.d = c * f.b + d * f.d;
  r.tx = a * f.tx + b * f.ty + tx;
  r.ty = c * f.tx + d * f.ty + ty;
  return r;
}

Affine2 Affine2::inverse() const {
  const double det = a * d - b * c;
  Affine2 r;
  r.a = d / det;
  r.b = -b / det;
  r.c = -c / det;
  r.d = a / det;
  r.tx = -(r.a * tx + r.b * ty);
  r.ty = -(r.c * tx + r.d * ty);
  return r;
}

bool Affine2::is_identity(double tol) const {
  return std::abs(a - 1) <= tol && std::abs(b) <= tol && std::abs(c) <= tol &&
         std::abs(d - 1) <= tol && std::abs(tx) <= tol && std::abs(ty) <= tol;
}

int orientation(Vec2 a, Vec2 b, Vec2 c, double eps) {
  const double v = (b - a).cross(c - a);
  if (v > eps) return 1;
  if (v < -eps) return -1;
  return 0;
}

bool point_on_segment(Vec2 p, Vec2 a, Vec2 b, double eps) {
  const Vec2 ab = b - a;
  const double len2 = ab.squared_norm();
  if (len2 == 0.0) return distance(p, a) <= eps;
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return distance(p, a + ab * t) <= eps;
}

bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2) {
  const int o1 = orientation(p1, p2, q1);
  const int o2 = orientation(p1, p2, q2);
  const int o3 = orientation(q1, q2, p1);
  const int o4 = orientation(q1, q2, p2);
  if (o1 != o2 && o3 != o4) return true;
  if (o1 == 0 && point_on_segment(q1, p1, p2)) return true;
  if (o2 == 0 && point_on_segment(q2, p1, p2)) return true;
  if (o3 == 0 && point_on_segment(p1, q1, q2)) return true;
  if (o4 == 0 && point_on_segment(p2, q1, q2)) return true;
  return false;
}

bool point_in_polygon(Vec2 p, std::span<const Vec2> poly, bool boundary_inside) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Vec2 a = poly[j];
    const Vec2 b = poly[i];
    if (point_on_segment(p, a, b)) return boundary_inside;
    if ((b.y > p.y) != (a.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

bool segment_hits_polygon(Vec2 a, Vec2 b, std::span<const Vec2> poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    if (segments_intersect(a, b, poly[j], poly[i])) return true;
  }
  return point_in_polygon((a + b) * 0.5, poly, true);
}

double polyline_length(std::span<const Vec2> pts) {
  double len = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
  return len;
}

Vec2 point_at_arclength(std::span<const Vec2> pts, double s) {
  if (pts.empty()) return {};
  if (s <= 0.0) return pts.front();
  double acc = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const double seg = distance(pts[i - 1], pts[i]);
    if (acc + seg >= s && seg > 0.0) {
      const double t = (s - acc) / seg;
      return pts[i - 1] + (pts[i] - pts[i - 1]) * t;
    }
    acc += seg;
  }
  return pts.back();
}

double distance_to_polyline(Vec2 p, std::span<const Vec2> pts) {
  if (pts.size() == 1) return distance(p, pts[0]);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < pts.size(); ++i) {
    const Vec2 a = pts[i - 1];
    const Vec2 ab = pts[i] - a;
    const double len2 = ab.squared_norm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    best = std::min(best, distance(p, a + ab * t));
  }
  return best;
}

}  // namespace dsp
