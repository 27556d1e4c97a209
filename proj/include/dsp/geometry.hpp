#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace dsp {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double cross(Vec2 o) const { return x * o.y - y * o.x; }
  double norm() const { return std::hypot(x, y); }
  double squared_norm() const { return x * x + y * y; }
};

inline double distance(Vec2 a, Vec2 b) { return (a - b).norm(); }

/// Closed ring of vertices; the closing edge back to the first vertex is implicit.
using Polygon = std::vector<Vec2>;

/// 2-D affine map p -> L p + t. Rigid motions and mirrors compose into this
/// form, which keeps the scene-to-world mapping invertible.
struct Affine2 {
  double a = 1, b = 0, c = 0, d = 1;  // L = [[a b] [c d]]
  double tx = 0, ty = 0;

  static Affine2 identity() { return {}; }
  static Affine2 rotation(double angle);
  static Affine2 translation(Vec2 t);
  static Affine2 mirror_x();  // (x, y) -> (x, -y)

  Vec2 apply(Vec2 p) const { return {a * p.x + b * p.y + tx, c * p.x + d * p.y + ty}; }
  Vec2 apply_vector(Vec2 v) const { return {a * v.x + b * v.y, c * v.x + d * v.y}; }
  /// (*this) after `first`: p -> this(first(p)).
  Affine2 after(const Affine2& first) const;
  Affine2 inverse() const;
  bool is_identity(double tol) const;
  bool operator==(const Affine2&) const = default;
};

/// Orientation sign of (b - a) x (c - a) with a small tolerance; returns -1, 0, 1.
int orientation(Vec2 a, Vec2 b, Vec2 c, double eps = 1e-12);

bool point_on_segment(Vec2 p, Vec2 a, Vec2 b, double eps = 1e-9);

/// Closed-segment intersection (touching counts).
bool segments_intersect(Vec2 p1, Vec2 p2, Vec2 q1, Vec2 q2);

/// Even-odd point-in-polygon; points on the boundary count as inside when
/// `boundary_inside` is set.
bool point_in_polygon(Vec2 p, std::span<const Vec2> poly, bool boundary_inside = true);

/// True if the closed segment [a, b] touches the boundary of `poly` or its
/// midpoint lies inside `poly`.
bool segment_hits_polygon(Vec2 a, Vec2 b, std::span<const Vec2> poly);

double polyline_length(std::span<const Vec2> pts);

/// Point at arc length `s` along the polyline (clamped to its ends).
Vec2 point_at_arclength(std::span<const Vec2> pts, double s);

/// Distance from `p` to the polyline.
double distance_to_polyline(Vec2 p, std::span<const Vec2> pts);

}  // namespace dsp
