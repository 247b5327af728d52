#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "stmix/geometry.hpp"
#include "stmix/mixture.hpp"

namespace stmix {

// Midpoint-rule integration lattice over a study region: square cells tile
// the bounding box, and a cell belongs to the region when its center does.
struct RegionGrid {
  double x0{0.0}, y0{0.0};  // lower-left corner of cell (0,0)
  double h{0.5};            // cell edge, km
  int nx{0}, ny{0};
  std::vector<std::pair<int, int>> cells;  // (ix, iy) of in-region cells
  std::vector<SpatialPoint> centers;       // centers of the same cells

  double cell_area() const { return h * h; }
  SpatialPoint center_of(int ix, int iy) const {
    return {x0 + (ix + 0.5) * h, y0 + (iy + 0.5) * h};
  }
};

inline RegionGrid build_region_grid(const StudyRegion& region) {
  validate(region);
  const Bounds b = bounding_box(region.vertices);
  RegionGrid g;
  g.x0 = b.xmin;
  g.y0 = b.ymin;
  g.h = region.grid_resolution;
  g.nx = std::max(1, static_cast<int>(std::ceil((b.xmax - b.xmin) / g.h - 1e-12)));
  g.ny = std::max(1, static_cast<int>(std::ceil((b.ymax - b.ymin) / g.h - 1e-12)));
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      const SpatialPoint c = g.center_of(ix, iy);
      if (point_in_polygon(c, region.vertices)) {
        g.cells.emplace_back(ix, iy);
        g.centers.push_back(c);
      }
    }
  }
  if (g.cells.empty())
    throw std::invalid_argument("region grid: no cell center falls inside the region");
  return g;
}

// Component density at every in-region cell center.
inline std::vector<double> component_cell_values(const Component& comp, const RegionGrid& grid) {
  const Gaussian2 g = Gaussian2::from(comp);
  std::vector<double> vals;
  vals.reserve(grid.centers.size());
  for (const auto& c : grid.centers) vals.push_back(g.pdf(c));
  return vals;
}

// Midpoint-rule mass of each component over the region.
inline std::vector<double> component_region_masses(const std::vector<Component>& comps,
                                                   const RegionGrid& grid) {
  std::vector<double> masses;
  masses.reserve(comps.size());
  for (const auto& comp : comps) {
    const Gaussian2 g = Gaussian2::from(comp);
    double acc = 0.0;
    for (const auto& c : grid.centers) acc += g.pdf(c);
    masses.push_back(acc * grid.cell_area());
  }
  return masses;
}

// Per-block region mass of the mixture: const_b = sum_j w_bj * mass_j.
// These are the divisors that renormalize each block density to the region.
// Throws std::domain_error when a block leaves essentially no mass inside.
inline Eigen::VectorXd normalize_to_region(const MixtureState& m, const RegionGrid& grid) {
  validate(m);
  const std::vector<double> masses = component_region_masses(m.components, grid);
  Eigen::VectorXd consts(m.season.n_blocks);
  for (int b = 0; b < m.season.n_blocks; ++b) {
    double acc = 0.0;
    for (int j = 0; j < m.k(); ++j) acc += m.weights(b, j) * masses[j];
    if (!(acc >= 1e-10))
      throw std::domain_error("normalize_to_region: region mass below 1e-10 for a block");
    consts[b] = acc;
  }
  return consts;
}

}  // namespace stmix
