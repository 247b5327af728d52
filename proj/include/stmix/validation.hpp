#pragma once

// Goodness-of-fit checks for the fitted point process: each spatial margin
// is pushed through its cumulative intensity, turning inter-point gaps into
// residuals that are approximately iid uniform when the model is right.

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "stmix/grid.hpp"
#include "stmix/mixture.hpp"
#include "stmix/sampler.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// One transformed gap: which period and spatial dimension it came from.
struct ResidualEntry {
  int period{0};
  int dimension{0};  // 1 = first coordinate, 2 = second
  double u{0.0};
};

// Residuals per posterior draw, in a fixed deterministic order (period
// ascending, dimension 1 then 2, events ascending). Exactly tied
// coordinates yield u = 0; they are kept and counted rather than jittered.
struct UniformResiduals {
  std::vector<std::vector<ResidualEntry>> by_draw;
  long ties{0};
};

inline std::vector<double> residual_values(const UniformResiduals& res, int draw) {
  const auto& entries = res.by_draw.at(static_cast<size_t>(draw));
  std::vector<double> u;
  u.reserve(entries.size());
  for (const auto& e : entries) u.push_back(e.u);
  return u;
}

namespace detail {

// Grid cells bucketed into columns of equal coordinate along one margin.
// Cumulative mass is treated as linear inside a column, so two distinct
// coordinates falling in the same column still get distinct masses; a step
// function there would collapse their gap to zero and flood the residuals
// with spurious point mass at u = 0.
struct MarginColumns {
  std::vector<double> lo;               // low boundary per column, ascending
  std::vector<std::vector<int>> cells;  // grid indices per column
  double width{0.0};
};

inline MarginColumns margin_columns(const RegionGrid& grid, int dimension) {
  const int n = static_cast<int>(grid.centers.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  auto coord = [&](int i) {
    return dimension == 1 ? grid.centers[static_cast<size_t>(i)].x
                          : grid.centers[static_cast<size_t>(i)].y;
  };
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return coord(a) < coord(b); });
  MarginColumns mc;
  mc.width = grid.h;
  for (int i : order) {
    // centers in one column share the exact same double, so == is safe
    if (mc.lo.empty() || coord(i) - mc.width / 2.0 != mc.lo.back()) {
      mc.lo.push_back(coord(i) - mc.width / 2.0);
      mc.cells.emplace_back();
    }
    mc.cells.back().push_back(i);
  }
  return mc;
}

// Per-column mass of the renormalized block density, plus running totals.
struct MarginPrefix {
  std::vector<double> mass;   // one entry per column
  std::vector<double> total;  // cumulative, same length
};

inline MarginPrefix margin_prefix(const std::vector<double>& cell_density,
                                  const MarginColumns& mc, double cell_area, double norm_const) {
  MarginPrefix mp;
  mp.mass.reserve(mc.cells.size());
  mp.total.reserve(mc.cells.size());
  double acc = 0.0;
  for (const auto& column : mc.cells) {
    double m = 0.0;
    for (int i : column) m += cell_density[static_cast<size_t>(i)] * cell_area / norm_const;
    acc += m;
    mp.mass.push_back(m);
    mp.total.push_back(acc);
  }
  return mp;
}

// Mass at coordinate <= v, linear within the column containing v.
inline double prefix_at(const MarginColumns& mc, const MarginPrefix& mp, double v) {
  const auto it = std::upper_bound(mc.lo.begin(), mc.lo.end(), v);
  if (it == mc.lo.begin()) return 0.0;
  const size_t k = static_cast<size_t>(it - mc.lo.begin()) - 1;
  const double frac = std::min(1.0, (v - mc.lo[k]) / mc.width);
  return (k == 0 ? 0.0 : mp.total[k - 1]) + frac * mp.mass[k];
}

inline std::vector<double> block_cell_density(const MixtureState& m, const RegionGrid& grid,
                                              int block) {
  std::vector<double> d;
  d.reserve(grid.centers.size());
  for (const auto& c : grid.centers) d.push_back(mixture_density_block(c, block, m));
  return d;
}

}  // namespace detail

// Cumulative marginal intensity of one period's process along one spatial
// dimension: delta_t times the region-renormalized density mass with that
// coordinate at or below v, integrated on the region lattice.
inline double marginal_cumulative_intensity(int dimension, double v, int t,
                                            const PosteriorDraw& draw, const StudyRegion& region,
                                            const SeasonalityConfig& season, double delta_t) {
  if (dimension != 1 && dimension != 2)
    throw std::invalid_argument("marginal_cumulative_intensity: dimension must be 1 or 2");
  if (!(delta_t >= 0.0))
    throw std::invalid_argument("marginal_cumulative_intensity: delta_t must be >= 0");
  const RegionGrid grid = build_region_grid(region);
  const MixtureState m = mixture_from_draw(draw, season);
  const Eigen::VectorXd consts = normalize_to_region(m, grid);
  const int b = block_of(t, season);
  const detail::MarginColumns mc = detail::margin_columns(grid, dimension);
  const std::vector<double> dens = detail::block_cell_density(m, grid, b);
  const detail::MarginPrefix mp = detail::margin_prefix(dens, mc, grid.cell_area(), consts[b - 1]);
  return delta_t * detail::prefix_at(mc, mp, v);
}

// Transforms the test events into uniform residuals under each posterior
// draw. Events are grouped by period, sorted along each margin, and the
// cumulative-intensity gaps become u = 1 - exp(-gap) with the period's
// aggregate intensity taken to be its realized event count.
inline UniformResiduals uniform_residuals(const std::vector<Event>& test,
                                          const std::vector<PosteriorDraw>& draws,
                                          const StudyRegion& region,
                                          const SeasonalityConfig& season) {
  if (test.empty()) throw std::invalid_argument("uniform_residuals: no test events");
  if (draws.empty()) throw std::invalid_argument("uniform_residuals: no draws");
  const RegionGrid grid = build_region_grid(region);
  const detail::MarginColumns mc1 = detail::margin_columns(grid, 1);
  const detail::MarginColumns mc2 = detail::margin_columns(grid, 2);

  std::map<int, std::vector<SpatialPoint>> by_period;
  for (const auto& e : test) by_period[e.period].push_back(e.location);

  UniformResiduals res;
  res.by_draw.reserve(draws.size());
  for (const auto& draw : draws) {
    const MixtureState m = mixture_from_draw(draw, season);
    const Eigen::VectorXd consts = normalize_to_region(m, grid);
    std::map<int, std::pair<detail::MarginPrefix, detail::MarginPrefix>> prefix_by_block;
    std::vector<ResidualEntry> entries;
    for (const auto& [t, points] : by_period) {
      const int b = block_of(t, season);
      auto bit = prefix_by_block.find(b);
      if (bit == prefix_by_block.end()) {
        const std::vector<double> dens = detail::block_cell_density(m, grid, b);
        bit = prefix_by_block
                  .emplace(b, std::make_pair(detail::margin_prefix(dens, mc1, grid.cell_area(),
                                                                   consts[b - 1]),
                                             detail::margin_prefix(dens, mc2, grid.cell_area(),
                                                                   consts[b - 1])))
                  .first;
      }
      const double delta = static_cast<double>(points.size());
      for (int dim = 1; dim <= 2; ++dim) {
        std::vector<double> coords;
        coords.reserve(points.size());
        for (const auto& p : points) coords.push_back(dim == 1 ? p.x : p.y);
        std::sort(coords.begin(), coords.end());
        const detail::MarginColumns& mc = dim == 1 ? mc1 : mc2;
        const detail::MarginPrefix& prefix = dim == 1 ? bit->second.first : bit->second.second;
        double prev = 0.0;
        for (double v : coords) {
          const double cum = delta * detail::prefix_at(mc, prefix, v);
          const double u = 1.0 - std::exp(-(cum - prev));
          if (u == 0.0) res.ties += 1;
          entries.push_back({t, dim, u});
          prev = cum;
        }
      }
    }
    res.by_draw.push_back(std::move(entries));
  }
  return res;
}

namespace detail {

// Quantile by linear interpolation between order statistics.
inline double interp_quantile(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("interp_quantile: empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double h = p * static_cast<double>(sorted.size() - 1);
  const size_t lo = static_cast<size_t>(h);
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

}  // namespace detail

// Mean Q-Q curve and point-wise band across draws: at each theoretical
// uniform quantile, the mean and the 2.5/97.5 percentiles of the per-draw
// empirical quantiles.
struct QqSummary {
  std::vector<double> theoretical;
  std::vector<double> mean_quantile;
  std::vector<double> lower;
  std::vector<double> upper;
};

inline QqSummary qq_summary(const UniformResiduals& res, int n_points = 99) {
  if (res.by_draw.empty()) throw std::invalid_argument("qq_summary: no draws");
  if (n_points < 1) throw std::invalid_argument("qq_summary: n_points must be >= 1");
  std::vector<std::vector<double>> sorted_u;
  sorted_u.reserve(res.by_draw.size());
  for (size_t d = 0; d < res.by_draw.size(); ++d) {
    std::vector<double> u = residual_values(res, static_cast<int>(d));
    if (u.empty()) throw std::invalid_argument("qq_summary: draw with no residuals");
    std::sort(u.begin(), u.end());
    sorted_u.push_back(std::move(u));
  }
  QqSummary qq;
  for (int k = 1; k <= n_points; ++k) {
    const double p = static_cast<double>(k) / static_cast<double>(n_points + 1);
    std::vector<double> q;
    q.reserve(sorted_u.size());
    for (const auto& u : sorted_u) q.push_back(detail::interp_quantile(u, p));
    std::sort(q.begin(), q.end());
    double mean = 0.0;
    for (double v : q) mean += v;
    mean /= static_cast<double>(q.size());
    qq.theoretical.push_back(p);
    qq.mean_quantile.push_back(mean);
    qq.lower.push_back(detail::interp_quantile(q, 0.025));
    qq.upper.push_back(detail::interp_quantile(q, 0.975));
  }
  return qq;
}

// Kolmogorov-Smirnov distance of a sample from the uniform distribution on
// (0,1), and the asymptotic critical value it is compared against.
inline double ks_statistic_uniform(std::vector<double> u) {
  if (u.empty()) throw std::invalid_argument("ks_statistic_uniform: empty sample");
  std::sort(u.begin(), u.end());
  const double n = static_cast<double>(u.size());
  double d = 0.0;
  for (size_t i = 0; i < u.size(); ++i) {
    if (u[i] < 0.0 || u[i] > 1.0)
      throw std::invalid_argument("ks_statistic_uniform: value outside [0,1]");
    const double hi = static_cast<double>(i + 1) / n - u[i];
    const double lo = u[i] - static_cast<double>(i) / n;
    d = std::max(d, std::max(hi, lo));
  }
  return d;
}

inline double ks_critical_value(long n, double alpha) {
  if (n < 1) throw std::invalid_argument("ks_critical_value: n must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw std::invalid_argument("ks_critical_value: alpha must be in (0,1)");
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

}  // namespace stmix
