#pragma once

#include "bevsync/core.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace bevsync::geom {

/// Wrap an angle into (-pi, pi].
inline double normalizeAngle(double a) {
  double r = std::remainder(a, 2.0 * M_PI);
  if (r <= -M_PI) r += 2.0 * M_PI;
  return r;
}

/// Planar rigid-body pose, yaw in (-pi, pi].
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double yaw = 0.0;

  static Pose2 identity() { return {}; }
};

inline Pose2 compose(const Pose2& a, const Pose2& b) {
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  return {a.x + c * b.x - s * b.y, a.y + s * b.x + c * b.y,
          normalizeAngle(a.yaw + b.yaw)};
}

inline Pose2 inverse(const Pose2& p) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return {-(c * p.x + s * p.y), -(-s * p.x + c * p.y), normalizeAngle(-p.yaw)};
}

inline Eigen::Vector2d transformPoint(const Pose2& p, const Eigen::Vector2d& q) {
  const double c = std::cos(p.yaw), s = std::sin(p.yaw);
  return {p.x + c * q.x() - s * q.y(), p.y + s * q.x() + c * q.y()};
}

/// BEV box: center, heading, full extents. length is along the heading axis.
struct OrientedBox {
  double cx = 0.0;
  double cy = 0.0;
  double yaw = 0.0;
  double length = 1.0;
  double width = 1.0;

  /// Corners in counter-clockwise order.
  std::array<Eigen::Vector2d, 4> corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double hl = 0.5 * length, hw = 0.5 * width;
    const std::array<Eigen::Vector2d, 4> local = {
        Eigen::Vector2d(hl, hw), Eigen::Vector2d(-hl, hw),
        Eigen::Vector2d(-hl, -hw), Eigen::Vector2d(hl, -hw)};
    std::array<Eigen::Vector2d, 4> out;
    for (int i = 0; i < 4; ++i)
      out[i] = Eigen::Vector2d(cx + c * local[i].x() - s * local[i].y(),
                               cy + s * local[i].x() + c * local[i].y());
    return out;
  }

  bool contains(double px, double py) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = px - cx, dy = py - cy;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * length && std::abs(ly) <= 0.5 * width;
  }
};

inline OrientedBox transformBox(const Pose2& p, const OrientedBox& b) {
  const Eigen::Vector2d c = transformPoint(p, {b.cx, b.cy});
  return {c.x(), c.y(), normalizeAngle(p.yaw + b.yaw), b.length, b.width};
}

/// Regular BEV grid. Cell (r, c) covers
/// [origin + (c, r)*cell_size, origin + (c+1, r+1)*cell_size); x maps to
/// columns and y to rows.
struct GridSpec {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 1.0;
  int height_cells = 0;
  int width_cells = 0;

  Eigen::Vector2d cellCenter(int r, int c) const {
    return {origin_x + (c + 0.5) * cell_size, origin_y + (r + 0.5) * cell_size};
  }

  /// Continuous cell coordinates; (r, c) integer at cell centers.
  Eigen::Vector2d worldToCell(double x, double y) const {
    return {(y - origin_y) / cell_size - 0.5, (x - origin_x) / cell_size - 0.5};
  }

  bool cellIndex(double x, double y, int& r, int& c) const {
    c = static_cast<int>(std::floor((x - origin_x) / cell_size));
    r = static_cast<int>(std::floor((y - origin_y) / cell_size));
    return r >= 0 && r < height_cells && c >= 0 && c < width_cells;
  }

  bool inBounds(int r, int c) const {
    return r >= 0 && r < height_cells && c >= 0 && c < width_cells;
  }

  /// Grid covering the same area at a coarser resolution.
  GridSpec downsampled(int factor) const {
    return {origin_x, origin_y, cell_size * factor, height_cells / factor,
            width_cells / factor};
  }

  bool operator==(const GridSpec& o) const {
    return origin_x == o.origin_x && origin_y == o.origin_y &&
           cell_size == o.cell_size && height_cells == o.height_cells &&
           width_cells == o.width_cells;
  }
};

/// Bilinear read of one plane at continuous cell coordinates, zero outside.
template <class S>
S bilinearSample(const Plane<S>& p, double rf, double cf) {
  const int r0 = static_cast<int>(std::floor(rf));
  const int c0 = static_cast<int>(std::floor(cf));
  const double ar = rf - r0, ac = cf - c0;
  S out = S(0);
  for (int dr = 0; dr <= 1; ++dr) {
    for (int dc = 0; dc <= 1; ++dc) {
      const int r = r0 + dr, c = c0 + dc;
      if (r < 0 || r >= p.rows() || c < 0 || c >= p.cols()) continue;
      const double w = (dr ? ar : 1.0 - ar) * (dc ? ac : 1.0 - ac);
      if (w != 0.0) out += static_cast<S>(w) * p(r, c);
    }
  }
  return out;
}

/// Resample a stack of planes so that output cell centers read the input at
/// the inverse-transformed location. rel maps the input frame into the output
/// frame; samples falling outside the input are zero.
template <class S>
Tensor3<S> warpPlanes(const Tensor3<S>& in, const GridSpec& in_grid,
                      const Pose2& rel, const GridSpec& out_grid) {
  Tensor3<S> out(in.channels(), out_grid.height_cells, out_grid.width_cells);
  const Pose2 inv = inverse(rel);
  for (int r = 0; r < out_grid.height_cells; ++r) {
    for (int c = 0; c < out_grid.width_cells; ++c) {
      const Eigen::Vector2d w = out_grid.cellCenter(r, c);
      const Eigen::Vector2d src = transformPoint(inv, w);
      const Eigen::Vector2d rc = in_grid.worldToCell(src.x(), src.y());
      for (int ch = 0; ch < in.channels(); ++ch)
        out[ch](r, c) = bilinearSample(in[ch], rc.x(), rc.y());
    }
  }
  return out;
}

namespace detail {

inline double polygonArea(const std::vector<Eigen::Vector2d>& poly) {
  double a = 0.0;
  const int n = static_cast<int>(poly.size());
  for (int i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * std::abs(a);
}

// Sutherland-Hodgman clip of a convex polygon against the half-plane left of
// edge a->b.
inline std::vector<Eigen::Vector2d> clipEdge(
    const std::vector<Eigen::Vector2d>& poly, const Eigen::Vector2d& a,
    const Eigen::Vector2d& b) {
  std::vector<Eigen::Vector2d> out;
  const int n = static_cast<int>(poly.size());
  const Eigen::Vector2d d = b - a;
  auto side = [&](const Eigen::Vector2d& p) {
    return d.x() * (p.y() - a.y()) - d.y() * (p.x() - a.x());
  };
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d& p = poly[i];
    const Eigen::Vector2d& q = poly[(i + 1) % n];
    const double sp = side(p), sq = side(q);
    if (sp >= 0.0) out.push_back(p);
    if ((sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0)) {
      const double t = sp / (sp - sq);
      out.push_back(p + t * (q - p));
    }
  }
  return out;
}

}  // namespace detail

/// Intersection-over-union of two oriented boxes via convex polygon clipping.
/// Degenerate boxes yield 0.
inline double rotatedIou(const OrientedBox& a, const OrientedBox& b) {
  const double area_a = a.length * a.width;
  const double area_b = b.length * b.width;
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;

  const auto ca = a.corners();
  const auto cb = b.corners();
  std::vector<Eigen::Vector2d> poly(ca.begin(), ca.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i)
    poly = detail::clipEdge(poly, cb[i], cb[(i + 1) % 4]);
  if (poly.size() < 3) return 0.0;

  const double inter = detail::polygonArea(poly);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace bevsync::geom
