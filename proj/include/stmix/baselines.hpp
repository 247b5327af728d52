#pragma once

// Comparison forecasters: historical averaging of per-cell demand fractions
// on a fixed lattice, and the same averaging rule applied to per-period
// kernel density estimates instead of cell counts.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmix/evaluation.hpp"
#include "stmix/geometry.hpp"
#include "stmix/grid.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// Forecasting lattice. Cells are half-open [lo, hi) in each axis except the
// outermost edge, which is closed so points on the boundary still land in a
// cell.
struct GridSpec {
  SpatialPoint origin;
  double cell_size{1.0};
  int nx{0};
  int ny{0};
};

inline void validate(const GridSpec& g) {
  if (!(g.cell_size > 0.0) || !std::isfinite(g.cell_size))
    throw std::invalid_argument("grid spec: cell_size must be positive and finite");
  if (g.nx < 1 || g.ny < 1) throw std::invalid_argument("grid spec: nx and ny must be >= 1");
}

// Which past periods feed the forecast for a target period: offset o means
// period (target - o). Offsets must point strictly backwards.
struct HistoryRule {
  std::vector<int> offsets;
};

inline void validate(const HistoryRule& rule) {
  if (rule.offsets.empty()) throw std::invalid_argument("history rule: no offsets");
  for (int o : rule.offsets)
    if (o < 1) throw std::invalid_argument("history rule: offsets must be >= 1");
}

// The same time slot in each of the `weeks` preceding weeks.
inline HistoryRule preceding_weeks_rule(int weeks, int periods_per_week) {
  if (weeks < 1 || periods_per_week < 1)
    throw std::invalid_argument("preceding_weeks_rule: weeks and periods_per_week must be >= 1");
  HistoryRule rule;
  for (int w = 1; w <= weeks; ++w) rule.offsets.push_back(w * periods_per_week);
  return rule;
}

// The preceding weeks this year plus the same slots one year back. The year
// offset is calendar data (weeks do not tile years evenly), so the caller
// supplies it in periods.
inline HistoryRule repeated_year_rule(int weeks, int periods_per_week, int year_offset_periods) {
  if (year_offset_periods < 1)
    throw std::invalid_argument("repeated_year_rule: year offset must be >= 1");
  HistoryRule rule = preceding_weeks_rule(weeks, periods_per_week);
  const int base = static_cast<int>(rule.offsets.size());
  for (int i = 0; i < base; ++i) rule.offsets.push_back(year_offset_periods + rule.offsets[i]);
  return rule;
}

namespace detail {

// Cell of a point, or nullopt when it lies outside the lattice. Points
// exactly on the far edge are folded into the last cell.
inline std::optional<std::pair<int, int>> cell_of(const SpatialPoint& s, const GridSpec& g) {
  const double fx = (s.x - g.origin.x) / g.cell_size;
  const double fy = (s.y - g.origin.y) / g.cell_size;
  if (fx < 0.0 || fy < 0.0 || fx > g.nx || fy > g.ny) return std::nullopt;
  const int ix = std::min(g.nx - 1, static_cast<int>(fx));
  const int iy = std::min(g.ny - 1, static_cast<int>(fy));
  return std::make_pair(ix, iy);
}

}  // namespace detail

// Normalized demand histogram for one period: count / (n_t * cell area), so
// the values sum (times area) to one. A period with no events carries no
// density information and is returned as nullopt so averaging can skip it.
inline std::optional<Eigen::MatrixXd> cell_histogram_density(
    const std::vector<SpatialPoint>& events, const GridSpec& g) {
  validate(g);
  if (events.empty()) return std::nullopt;
  Eigen::MatrixXd cells = Eigen::MatrixXd::Zero(g.nx, g.ny);
  for (const auto& s : events) {
    const auto c = detail::cell_of(s, g);
    if (!c) throw std::invalid_argument("cell_histogram_density: event outside the grid");
    cells(c->first, c->second) += 1.0;
  }
  const double area = g.cell_size * g.cell_size;
  cells /= static_cast<double>(events.size()) * area;
  return cells;
}

// Looks up the histogram value at a point; zero outside the lattice.
inline double cell_value_at(const Eigen::MatrixXd& cells, const GridSpec& g,
                            const SpatialPoint& s) {
  const auto c = detail::cell_of(s, g);
  if (!c) return 0.0;
  return cells(c->first, c->second);
}

// Average of the available historical cell densities for one target period.
// Histories that are missing from the map or marked empty are skipped; the
// forecast is the plain mean of what remains.
inline Eigen::MatrixXd medic_forecast(int target,
                                      const std::map<int, std::optional<Eigen::MatrixXd>>& history,
                                      const HistoryRule& rule) {
  validate(rule);
  Eigen::MatrixXd acc;
  int used = 0;
  for (int o : rule.offsets) {
    const auto it = history.find(target - o);
    if (it == history.end() || !it->second.has_value()) continue;
    const Eigen::MatrixXd& h = *it->second;
    if (used == 0) {
      acc = h;
    } else {
      if (h.rows() != acc.rows() || h.cols() != acc.cols())
        throw std::invalid_argument("medic_forecast: history grids disagree in shape");
      acc += h;
    }
    used += 1;
  }
  if (used == 0) throw std::runtime_error("medic_forecast: no historical density available");
  return acc / static_cast<double>(used);
}

// Per-period kernel density estimator with a shared diagonal bandwidth.
struct KdeModel {
  double h1{1.0};
  double h2{1.0};
  std::map<int, std::vector<SpatialPoint>> events_by_period;
};

inline void validate(const KdeModel& m) {
  if (!(m.h1 > 0.0) || !(m.h2 > 0.0) || !std::isfinite(m.h1) || !std::isfinite(m.h2))
    throw std::invalid_argument("kde model: bandwidths must be positive and finite");
}

// Product-Gaussian kernel density of one period's events at s.
inline double kde_density(const SpatialPoint& s, const std::vector<SpatialPoint>& events,
                          double h1, double h2) {
  if (!(h1 > 0.0) || !(h2 > 0.0))
    throw std::invalid_argument("kde_density: bandwidths must be positive");
  if (events.empty()) throw std::runtime_error("kde_density: no events in period");
  const double norm = 1.0 / (2.0 * std::numbers::pi * h1 * h2 * events.size());
  double acc = 0.0;
  for (const auto& e : events) {
    const double dx = (s.x - e.x) / h1;
    const double dy = (s.y - e.y) / h2;
    acc += std::exp(-0.5 * (dx * dx + dy * dy));
  }
  return norm * acc;
}

inline double kde_density(const SpatialPoint& s, int period, const KdeModel& m) {
  validate(m);
  const auto it = m.events_by_period.find(period);
  if (it == m.events_by_period.end()) throw std::runtime_error("kde_density: period not in model");
  return kde_density(s, it->second, m.h1, m.h2);
}

// Historical periods with usable data for a target under a rule.
inline std::vector<int> available_history(int target, const KdeModel& m, const HistoryRule& rule) {
  validate(rule);
  std::vector<int> periods;
  for (int o : rule.offsets) {
    const auto it = m.events_by_period.find(target - o);
    if (it != m.events_by_period.end() && !it->second.empty()) periods.push_back(target - o);
  }
  return periods;
}

// Pointwise mean of the historical kernel densities for a target period.
inline double medic_kde_forecast(const SpatialPoint& s, int target, const KdeModel& m,
                                 const HistoryRule& rule) {
  validate(m);
  const std::vector<int> periods = available_history(target, m, rule);
  if (periods.empty())
    throw std::runtime_error("medic_kde_forecast: no historical density available");
  double acc = 0.0;
  for (int p : periods) acc += kde_density(s, m.events_by_period.at(p), m.h1, m.h2);
  return acc / static_cast<double>(periods.size());
}

// Numeric mass of an arbitrary density over the region lattice, for the same
// renormalization treatment the mixture densities get.
inline double density_region_mass(const std::function<double(const SpatialPoint&)>& density,
                                  const RegionGrid& grid) {
  double acc = 0.0;
  for (const auto& c : grid.centers) acc += density(c);
  return acc * grid.cell_area();
}

// Groups periods into weekly folds by their position in the period sequence.
inline std::vector<std::vector<int>> weekly_folds(const std::vector<int>& periods,
                                                  int periods_per_week) {
  if (periods_per_week < 1) throw std::invalid_argument("weekly_folds: periods_per_week >= 1");
  std::map<int, std::vector<int>> by_week;
  for (int t : periods) {
    if (t < 1) throw std::invalid_argument("weekly_folds: periods must be >= 1");
    by_week[(t - 1) / periods_per_week].push_back(t);
  }
  std::vector<std::vector<int>> folds;
  for (auto& [week, ts] : by_week) folds.push_back(std::move(ts));
  return folds;
}

// Bandwidth selection by cross validation: each fold of periods is held out
// in turn, their events are scored under the averaged-history kernel
// forecast built from the remaining periods, and the candidate with the best
// pooled log score wins. Ties go to the smaller h1+h2 (then smaller h1) so
// the choice is deterministic.
inline std::pair<double, double> cv_bandwidth(
    const std::map<int, std::vector<SpatialPoint>>& events_by_period, const HistoryRule& rule,
    const std::vector<std::vector<int>>& folds,
    const std::vector<std::pair<double, double>>& candidates) {
  validate(rule);
  if (candidates.empty()) throw std::invalid_argument("cv_bandwidth: no candidates");
  if (folds.size() < 2) throw std::invalid_argument("cv_bandwidth: need at least 2 folds");

  double best_score = -std::numeric_limits<double>::infinity();
  std::pair<double, double> best = candidates.front();
  for (const auto& [h1, h2] : candidates) {
    KdeModel m;
    m.h1 = h1;
    m.h2 = h2;
    validate(m);
    double total = 0.0;
    long n_scored = 0;
    for (const auto& fold : folds) {
      m.events_by_period = events_by_period;
      for (int t : fold) m.events_by_period.erase(t);
      for (int t : fold) {
        const auto it = events_by_period.find(t);
        if (it == events_by_period.end()) continue;
        if (available_history(t, m, rule).empty()) continue;
        for (const auto& s : it->second) {
          total += std::log(medic_kde_forecast(s, t, m, rule));
          n_scored += 1;
        }
      }
    }
    if (n_scored == 0)
      throw std::invalid_argument("cv_bandwidth: no held-out period has usable history");
    const double score = total / static_cast<double>(n_scored);
    const bool better =
        score > best_score ||
        (score == best_score && (h1 + h2 < best.first + best.second ||
                                 (h1 + h2 == best.first + best.second && h1 < best.first)));
    if (better) {
      best_score = score;
      best = {h1, h2};
    }
  }
  return best;
}

}  // namespace stmix
