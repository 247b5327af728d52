#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace stmix {

// Planar location in km (projected coordinates, not lon/lat).
struct SpatialPoint {
  double x{0.0};
  double y{0.0};
};

// Simple closed polygon; vertices listed once, last-to-first edge implicit.
// grid_resolution is the edge length (km) of integration cells laid over it.
struct StudyRegion {
  std::vector<SpatialPoint> vertices;
  double grid_resolution{0.5};
};

struct Bounds {
  double xmin{0.0}, xmax{0.0}, ymin{0.0}, ymax{0.0};
};

inline Bounds bounding_box(const std::vector<SpatialPoint>& poly) {
  if (poly.empty()) throw std::invalid_argument("bounding_box: empty polygon");
  Bounds b{poly[0].x, poly[0].x, poly[0].y, poly[0].y};
  for (const auto& p : poly) {
    b.xmin = std::min(b.xmin, p.x);
    b.xmax = std::max(b.xmax, p.x);
    b.ymin = std::min(b.ymin, p.y);
    b.ymax = std::max(b.ymax, p.y);
  }
  return b;
}

// Signed shoelace area; positive for counter-clockwise vertex order.
inline double signed_area(const std::vector<SpatialPoint>& poly) {
  double a = 0.0;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = poly[i];
    const auto& q = poly[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

inline double polygon_area(const std::vector<SpatialPoint>& poly) {
  return std::abs(signed_area(poly));
}

namespace detail {

inline double cross(const SpatialPoint& o, const SpatialPoint& a, const SpatialPoint& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

inline bool on_segment(const SpatialPoint& p, const SpatialPoint& a, const SpatialPoint& b) {
  if (cross(a, b, p) != 0.0) return false;
  return p.x >= std::min(a.x, b.x) && p.x <= std::max(a.x, b.x) &&
         p.y >= std::min(a.y, b.y) && p.y <= std::max(a.y, b.y);
}

// Proper crossing of open segments (shared endpoints do not count).
inline bool segments_cross(const SpatialPoint& a, const SpatialPoint& b,
                           const SpatialPoint& c, const SpatialPoint& d) {
  const double d1 = cross(a, b, c);
  const double d2 = cross(a, b, d);
  const double d3 = cross(c, d, a);
  const double d4 = cross(c, d, b);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0)) && d1 != 0 && d2 != 0 && d3 != 0 &&
         d4 != 0;
}

}  // namespace detail

// Even-odd ray casting; points exactly on an edge count as inside.
inline bool point_in_polygon(const SpatialPoint& p, const std::vector<SpatialPoint>& poly) {
  const std::size_t n = poly.size();
  if (n < 3) throw std::invalid_argument("point_in_polygon: polygon needs >= 3 vertices");
  for (std::size_t i = 0; i < n; ++i) {
    if (detail::on_segment(p, poly[i], poly[(i + 1) % n])) return true;
  }
  bool in = false;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double xint = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
      if (p.x < xint) in = !in;
    }
  }
  return in;
}

inline bool point_in_region(const SpatialPoint& p, const StudyRegion& region) {
  return point_in_polygon(p, region.vertices);
}

// Throws std::invalid_argument unless the region is a simple polygon with
// positive area, finite coordinates, and a positive grid resolution.
inline void validate(const StudyRegion& region) {
  const auto& poly = region.vertices;
  const std::size_t n = poly.size();
  if (n < 3) throw std::invalid_argument("region: polygon needs >= 3 vertices");
  for (const auto& p : poly) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y))
      throw std::invalid_argument("region: vertex coordinates must be finite");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % n];
    if (a.x == b.x && a.y == b.y)
      throw std::invalid_argument("region: repeated consecutive vertex");
  }
  // Non-adjacent edges must not cross, otherwise the polygon is self-intersecting.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;
      if (detail::segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
        throw std::invalid_argument("region: polygon edges cross");
    }
  }
  if (!(polygon_area(poly) > 0.0))
    throw std::invalid_argument("region: polygon area must be positive");
  if (!std::isfinite(region.grid_resolution) || !(region.grid_resolution > 0.0))
    throw std::invalid_argument("region: grid resolution must be positive");
}

}  // namespace stmix
