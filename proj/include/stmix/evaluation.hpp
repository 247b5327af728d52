#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "stmix/geometry.hpp"
#include "stmix/grid.hpp"
#include "stmix/mixture.hpp"
#include "stmix/sampler.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

// A forecast under evaluation: density at (period, point), plus the label
// used in score reports.
struct ScoredDensity {
  std::function<double(int, const SpatialPoint&)> evaluator;
  std::string label;
};

// Travel-time model for the operational metrics: constant speed, L1
// distance to the nearest base.
struct ResponseTimeConfig {
  std::vector<SpatialPoint> bases;
  double speed{46.44};  // km/h
  std::vector<double> thresholds = [] {
    std::vector<double> v;
    for (int s = 60; s <= 300; s += 10) v.push_back(s);
    return v;
  }();  // seconds
};

inline void validate(const ResponseTimeConfig& rt) {
  if (rt.bases.empty()) throw std::invalid_argument("response time: need at least one base");
  for (const auto& b : rt.bases) {
    if (!std::isfinite(b.x) || !std::isfinite(b.y))
      throw std::invalid_argument("response time: non-finite base location");
  }
  if (!(rt.speed > 0.0)) throw std::invalid_argument("response time: speed must be positive");
  if (rt.thresholds.empty()) throw std::invalid_argument("response time: no thresholds");
  for (std::size_t i = 0; i < rt.thresholds.size(); ++i) {
    if (!(rt.thresholds[i] > 0.0))
      throw std::invalid_argument("response time: thresholds must be positive");
    if (i > 0 && !(rt.thresholds[i] > rt.thresholds[i - 1]))
      throw std::invalid_argument("response time: thresholds must increase");
  }
}

// Average log score plus its bookkeeping. With a positive floor, densities
// below it are lifted before taking logs and the lift count reported; with
// no floor a zero density makes the score -infinity and the offending event
// indices are recorded.
struct PaScore {
  double nats{0.0};
  long floored{0};
  std::vector<std::size_t> zero_events;
};

inline PaScore predictive_accuracy_detailed(const std::vector<Event>& test,
                                            const ScoredDensity& f, double floor = 0.0) {
  if (test.empty()) throw std::invalid_argument("predictive_accuracy: no test events");
  if (!f.evaluator) throw std::invalid_argument("predictive_accuracy: evaluator not set");
  PaScore out;
  double acc = 0.0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    double v = f.evaluator(test[i].period, test[i].location);
    if (std::isnan(v) || v < 0.0)
      throw std::domain_error("predictive_accuracy: negative or NaN density");
    if (floor > 0.0 && v < floor) {
      v = floor;
      out.floored += 1;
    }
    if (v == 0.0) {
      out.zero_events.push_back(i);
      continue;
    }
    acc += std::log(v);
  }
  out.nats = out.zero_events.empty() ? acc / static_cast<double>(test.size())
                                     : -std::numeric_limits<double>::infinity();
  return out;
}

// Mean log predictive density in nats per event.
inline double predictive_accuracy(const std::vector<Event>& test, const ScoredDensity& f) {
  return predictive_accuracy_detailed(test, f).nats;
}

// Per-draw predictive accuracy of the region-renormalized mixture density.
inline double pa_of_draw(const std::vector<Event>& test, const PosteriorDraw& draw,
                         const RegionGrid& grid, const SeasonalityConfig& season) {
  const MixtureState m = mixture_from_draw(draw, season);
  const Eigen::VectorXd consts = normalize_to_region(m, grid);
  ScoredDensity f;
  f.evaluator = [&m, &consts, &season](int t, const SpatialPoint& s) {
    const int b = block_of(t, season);
    return mixture_density_block(s, b, m) / consts[b - 1];
  };
  return predictive_accuracy(test, f);
}

// Monte Carlo predictive accuracy: the mean over posterior draws of the
// per-draw score (not the score of the averaged density).
inline double pa_mix(const std::vector<Event>& test, const std::vector<PosteriorDraw>& draws,
                     const StudyRegion& region, const SeasonalityConfig& season) {
  if (draws.empty()) throw std::invalid_argument("pa_mix: need at least one draw");
  const RegionGrid grid = build_region_grid(region);
  double acc = 0.0;
  for (const auto& d : draws) acc += pa_of_draw(test, d, grid, season);
  return acc / static_cast<double>(draws.size());
}

struct CiResult {
  double mean{0.0};
  double half_width{0.0};
  long n_batches{0};
};

// Nonoverlapping batch means over floor(sqrt(M)) batches with a Student-t
// multiplier. Trailing points that do not fill a batch are dropped.
inline CiResult batch_means_ci(const std::vector<double>& scores, double level = 0.95) {
  if (!(level > 0.0) || !(level < 1.0))
    throw std::invalid_argument("batch_means_ci: level must be in (0,1)");
  const long m = static_cast<long>(std::floor(std::sqrt(static_cast<double>(scores.size()))));
  if (m < 4) throw std::invalid_argument("batch_means_ci: need at least 16 scores (4 batches)");
  const long len = static_cast<long>(scores.size()) / m;
  std::vector<double> batch(m, 0.0);
  for (long i = 0; i < m; ++i) {
    for (long j = 0; j < len; ++j) batch[i] += scores[i * len + j];
    batch[i] /= static_cast<double>(len);
  }
  CiResult out;
  out.n_batches = m;
  for (double b : batch) out.mean += b;
  out.mean /= static_cast<double>(m);
  double var = 0.0;
  for (double b : batch) var += (b - out.mean) * (b - out.mean);
  var /= static_cast<double>(m - 1);
  const boost::math::students_t dist(static_cast<double>(m - 1));
  const double tq = boost::math::quantile(dist, 0.5 + 0.5 * level);
  out.half_width = tq * std::sqrt(var / static_cast<double>(m));
  return out;
}

// N over the integrated autocorrelation time, with lag-k correlations summed
// in consecutive pairs until the first nonpositive pair.
inline double effective_sample_size(const std::vector<double>& x) {
  const long n = static_cast<long>(x.size());
  if (n < 10) throw std::invalid_argument("effective_sample_size: need at least 10 points");
  // a literally constant chain carries no autocorrelation information; by
  // convention it keeps its nominal size (checked before any arithmetic,
  // since mean subtraction would leave rounding residue in gamma(0))
  if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }))
    return static_cast<double>(n);
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  auto gamma = [&](long k) {
    double acc = 0.0;
    for (long i = 0; i + k < n; ++i) acc += (x[i] - mean) * (x[i + k] - mean);
    return acc / static_cast<double>(n);
  };
  const double g0 = gamma(0);
  if (g0 == 0.0) return static_cast<double>(n);  // squared residuals underflowed
  double tau = 1.0;
  for (long k = 1; k + 1 < n; k += 2) {
    const double pair = (gamma(k) + gamma(k + 1)) / g0;
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  return static_cast<double>(n) / tau;
}

// Potential scale reduction factor over parallel chains of equal length.
inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("gelman_rubin: need at least 2 chains");
  const long n = static_cast<long>(chains[0].size());
  if (n < 2) throw std::invalid_argument("gelman_rubin: chains too short");
  for (const auto& c : chains) {
    if (static_cast<long>(c.size()) != n)
      throw std::invalid_argument("gelman_rubin: chains must have equal length");
  }
  const long m = static_cast<long>(chains.size());
  std::vector<double> means(m, 0.0);
  double grand = 0.0;
  for (long i = 0; i < m; ++i) {
    for (double v : chains[i]) means[i] += v;
    means[i] /= static_cast<double>(n);
    grand += means[i];
  }
  grand /= static_cast<double>(m);
  double w = 0.0;
  for (long i = 0; i < m; ++i) {
    double s2 = 0.0;
    for (double v : chains[i]) s2 += (v - means[i]) * (v - means[i]);
    w += s2 / static_cast<double>(n - 1);
  }
  w /= static_cast<double>(m);
  if (!(w > 0.0)) throw std::domain_error("gelman_rubin: zero within-chain variance");
  double b_over_n = 0.0;
  for (long i = 0; i < m; ++i) b_over_n += (means[i] - grand) * (means[i] - grand);
  b_over_n /= static_cast<double>(m - 1);
  const double nn = static_cast<double>(n);
  return std::sqrt(((nn - 1.0) / nn * w + b_over_n) / w);
}

namespace detail {

inline double l1_to_nearest_base(const SpatialPoint& p, const std::vector<SpatialPoint>& bases) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& b : bases) best = std::min(best, std::abs(p.x - b.x) + std::abs(p.y - b.y));
  return best;
}

}  // namespace detail

// Fraction of the period-t demand within reach: mass over in-region cells
// whose center lies within L1 distance speed*r of a base, over the mass of
// all cells. The ratio makes the result exact on [0,1] regardless of the
// discretization residue of the renormalization.
inline double coverage_fraction(const ScoredDensity& f, int t, const ResponseTimeConfig& rt,
                                const StudyRegion& region, double threshold_seconds) {
  validate(rt);
  if (!(threshold_seconds >= 0.0))
    throw std::invalid_argument("coverage_fraction: threshold must be >= 0");
  const RegionGrid grid = build_region_grid(region);
  const double radius = rt.speed * threshold_seconds / 3600.0;
  double total = 0.0, covered = 0.0;
  for (const auto& c : grid.centers) {
    const double v = f.evaluator(t, c);
    if (std::isnan(v) || v < 0.0)
      throw std::domain_error("coverage_fraction: negative or NaN density");
    total += v;
    if (detail::l1_to_nearest_base(c, rt.bases) <= radius) covered += v;
  }
  return total > 0.0 ? covered / total : 0.0;
}

struct OperationalErrorPoint {
  double threshold_seconds{0.0};
  double mean_error{0.0};
  double ci_half_width{0.0};  // 1.96 * sd / sqrt(T) over the period series
};

struct OperationalErrorResult {
  std::vector<OperationalErrorPoint> points;
  long periods_used{0};
  long periods_empty{0};  // requested periods with no test events, excluded
};

// Error(M, r): per period, |predicted covered fraction - empirical covered
// fraction of the test events|, averaged over the periods that have events.
inline OperationalErrorResult operational_error(const ScoredDensity& f,
                                                const std::vector<Event>& test,
                                                const ResponseTimeConfig& rt,
                                                const StudyRegion& region,
                                                const std::vector<int>& periods) {
  validate(rt);
  if (periods.empty()) throw std::invalid_argument("operational_error: no periods given");
  const RegionGrid grid = build_region_grid(region);

  std::map<int, std::vector<std::size_t>> by_period;
  for (std::size_t i = 0; i < test.size(); ++i) by_period[test[i].period].push_back(i);

  // distances are period-independent; compute them once
  std::vector<double> cell_dist;
  cell_dist.reserve(grid.centers.size());
  for (const auto& c : grid.centers)
    cell_dist.push_back(detail::l1_to_nearest_base(c, rt.bases));
  std::vector<double> event_dist(test.size());
  for (std::size_t i = 0; i < test.size(); ++i)
    event_dist[i] = detail::l1_to_nearest_base(test[i].location, rt.bases);

  const std::size_t n_thresholds = rt.thresholds.size();
  std::vector<std::vector<double>> errors(n_thresholds);
  OperationalErrorResult out;
  std::vector<double> vals(grid.centers.size());
  for (int t : periods) {
    const auto it = by_period.find(t);
    if (it == by_period.end() || it->second.empty()) {
      out.periods_empty += 1;
      continue;
    }
    out.periods_used += 1;
    double total = 0.0;
    for (std::size_t c = 0; c < grid.centers.size(); ++c) {
      vals[c] = f.evaluator(t, grid.centers[c]);
      if (std::isnan(vals[c]) || vals[c] < 0.0)
        throw std::domain_error("operational_error: negative or NaN density");
      total += vals[c];
    }
    for (std::size_t r = 0; r < n_thresholds; ++r) {
      const double radius = rt.speed * rt.thresholds[r] / 3600.0;
      double covered = 0.0;
      for (std::size_t c = 0; c < grid.centers.size(); ++c) {
        if (cell_dist[c] <= radius) covered += vals[c];
      }
      const double p_method = total > 0.0 ? covered / total : 0.0;
      long inside = 0;
      for (std::size_t i : it->second) {
        if (event_dist[i] <= radius) inside += 1;
      }
      const double p_test = static_cast<double>(inside) / static_cast<double>(it->second.size());
      errors[r].push_back(std::abs(p_method - p_test));
    }
  }
  if (out.periods_used == 0)
    throw std::invalid_argument("operational_error: every requested period is empty");

  for (std::size_t r = 0; r < n_thresholds; ++r) {
    OperationalErrorPoint pt;
    pt.threshold_seconds = rt.thresholds[r];
    const double tt = static_cast<double>(errors[r].size());
    for (double e : errors[r]) pt.mean_error += e;
    pt.mean_error /= tt;
    double var = 0.0;
    for (double e : errors[r]) var += (e - pt.mean_error) * (e - pt.mean_error);
    var = tt > 1.0 ? var / (tt - 1.0) : 0.0;
    pt.ci_half_width = 1.96 * std::sqrt(var / tt);
    out.points.push_back(pt);
  }
  return out;
}

}  // namespace stmix
