// Forecast scoring shared by the command-line tool and the acceptance
// checks: renormalized posterior mean densities, per-draw and per-event
// log-score rows with interval half-widths, and the two reference
// baselines evaluated over a held-out window.
#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "stmix/baselines.hpp"
#include "stmix/config.hpp"
#include "stmix/evaluation.hpp"
#include "stmix/io.hpp"

namespace stmix {

// Mixture density of one draw, renormalized over the region, ready to score.
struct PreparedDraw {
  MixtureState mixture;
  Eigen::VectorXd norm_consts;
};

inline std::vector<PreparedDraw> prepare_draws(const DrawArchive& archive,
                                               const RegionGrid& grid) {
  std::vector<PreparedDraw> out;
  out.reserve(archive.draws.size());
  for (const auto& d : archive.draws) {
    PreparedDraw p;
    p.mixture = mixture_from_draw(d, archive.season);
    p.norm_consts = normalize_to_region(p.mixture, grid);
    out.push_back(std::move(p));
  }
  return out;
}

// Posterior mean of the renormalized density, the point forecast.
inline ScoredDensity posterior_mean_density(const std::vector<PreparedDraw>& prepared,
                                            const SeasonalityConfig& season) {
  if (prepared.empty()) throw std::invalid_argument("archive holds no draws");
  ScoredDensity f;
  f.label = "mixture";
  f.evaluator = [&prepared, season](int t, const SpatialPoint& s) {
    const int b = block_of(t, season);
    double acc = 0.0;
    for (const auto& p : prepared)
      acc += mixture_density_block(s, b, p.mixture) / p.norm_consts[b - 1];
    return acc / static_cast<double>(prepared.size());
  };
  return f;
}

struct ScoreRow {
  std::string method;
  double pa{0.0};
  double ci_half_width{0.0};
  long n_events{0};
  long n_draws{0};
};

// Mean and half-width for a series of scores: batch means once the series
// is long enough to batch, plain normal theory below that.
inline std::pair<double, double> ci_of_scores(const std::vector<double>& scores) {
  double mean = 0.0;
  for (double s : scores) mean += s;
  mean /= static_cast<double>(scores.size());
  if (scores.size() >= 16) {
    const CiResult ci = batch_means_ci(scores);
    return {ci.mean, ci.half_width};
  }
  double var = 0.0;
  for (double s : scores) var += (s - mean) * (s - mean);
  var = scores.size() > 1 ? var / static_cast<double>(scores.size() - 1) : 0.0;
  return {mean, 1.96 * std::sqrt(var / static_cast<double>(scores.size()))};
}

inline ScoreRow mixture_score_row(const DrawArchive& archive, const std::vector<Event>& test,
                                  const StudyRegion& region) {
  if (archive.draws.empty()) throw std::invalid_argument("archive holds no draws");
  const RegionGrid grid = build_region_grid(region);
  std::vector<double> per_draw;
  per_draw.reserve(archive.draws.size());
  for (const auto& d : archive.draws)
    per_draw.push_back(pa_of_draw(test, d, grid, archive.season));
  ScoreRow row;
  row.method = "mixture";
  std::tie(row.pa, row.ci_half_width) = ci_of_scores(per_draw);
  row.n_events = static_cast<long>(test.size());
  row.n_draws = static_cast<long>(archive.draws.size());
  return row;
}

// Average log score of an arbitrary forecast density with per-event normal
// CI. The density is renormalized over the region per period before scoring
// so every method is graded on the same footing.
inline ScoreRow densities_score_row(
    const std::string& method,
    const std::map<int, std::function<double(const SpatialPoint&)>>& by_period,
    const std::vector<Event>& test, const RegionGrid& grid, double floor) {
  std::map<int, double> mass;
  for (const auto& [t, f] : by_period) {
    mass[t] = density_region_mass(f, grid);
    if (!(mass[t] > 0.0))
      throw std::runtime_error(method + ": forecast for period " + std::to_string(t) +
                               " has no mass inside the region");
  }
  std::vector<double> logs;
  logs.reserve(test.size());
  for (const auto& e : test) {
    const auto it = by_period.find(e.period);
    if (it == by_period.end())
      throw std::runtime_error(method + ": no forecast for period " + std::to_string(e.period));
    double v = it->second(e.location) / mass.at(e.period);
    if (floor > 0.0 && v < floor) v = floor;
    logs.push_back(std::log(v));
  }
  ScoreRow row;
  row.method = method;
  std::tie(row.pa, row.ci_half_width) = ci_of_scores(logs);
  row.n_events = static_cast<long>(test.size());
  return row;
}

// Train events keep their periods; test events are interpreted as the window
// immediately after the training horizon, so baseline history offsets reach
// back into (and roll through) the combined stream.
inline std::vector<Event> shift_periods(const std::vector<Event>& events, int by) {
  std::vector<Event> out = events;
  for (auto& e : out) e.period += by;
  return out;
}

inline GridSpec baseline_grid(const StudyRegion& region, double cell_size) {
  const Bounds b = bounding_box(region.vertices);
  GridSpec g;
  g.origin = {b.xmin, b.ymin};
  g.cell_size = cell_size;
  g.nx = std::max(1, static_cast<int>(std::ceil((b.xmax - b.xmin) / cell_size - 1e-12)));
  g.ny = std::max(1, static_cast<int>(std::ceil((b.ymax - b.ymin) / cell_size - 1e-12)));
  return g;
}

inline std::map<int, std::vector<SpatialPoint>> group_by_period(const std::vector<Event>& events) {
  std::map<int, std::vector<SpatialPoint>> out;
  for (const auto& e : events) out[e.period].push_back(e.location);
  return out;
}

// A target period can lack usable history (an offset landing on a period
// with no events). Scoring must still cover every test event for the method
// comparison to stay apples to apples, so such targets fall back to the
// pooled training density, which never draws on anything after the training
// horizon.
inline ScoreRow medic_row(const RunConfig& cfg, const std::vector<Event>& train,
                          const std::vector<Event>& combined,
                          const std::vector<Event>& shifted_test, const StudyRegion& region,
                          const RegionGrid& grid) {
  const GridSpec spec = baseline_grid(region, cfg.baseline.cell_size);
  std::map<int, std::optional<Eigen::MatrixXd>> hist;
  for (const auto& [t, pts] : group_by_period(combined)) hist[t] = cell_histogram_density(pts, spec);
  std::vector<SpatialPoint> train_pts;
  for (const auto& e : train) train_pts.push_back(e.location);
  const std::optional<Eigen::MatrixXd> pooled = cell_histogram_density(train_pts, spec);

  const HistoryRule rule = history_rule_from(cfg);
  std::set<int> targets;
  for (const auto& e : shifted_test) targets.insert(e.period);
  std::map<int, std::function<double(const SpatialPoint&)>> by_period;
  std::map<int, Eigen::MatrixXd> forecasts;
  for (int t : targets) {
    bool usable = false;
    for (int o : rule.offsets) {
      const auto it = hist.find(t - o);
      usable = usable || (it != hist.end() && it->second.has_value());
    }
    forecasts[t] = usable ? medic_forecast(t, hist, rule) : *pooled;
    const Eigen::MatrixXd& cells = forecasts.at(t);
    by_period[t] = [&cells, &spec](const SpatialPoint& s) { return cell_value_at(cells, spec, s); };
  }
  return densities_score_row("medic", by_period, shifted_test, grid, cfg.pa_floor);
}

inline ScoreRow medic_kde_row(const RunConfig& cfg, const std::vector<Event>& train,
                              const std::vector<Event>& combined,
                              const std::vector<Event>& shifted_test, const RegionGrid& grid) {
  KdeModel model;
  model.h1 = cfg.baseline.h1;
  model.h2 = cfg.baseline.h2;
  model.events_by_period = group_by_period(combined);
  const HistoryRule rule = history_rule_from(cfg);
  if (cfg.baseline.cv) {
    KdeModel train_only;
    train_only.events_by_period = group_by_period(train);
    std::vector<int> periods;
    for (const auto& [t, pts] : train_only.events_by_period) periods.push_back(t);
    const auto folds = weekly_folds(periods, 7 * cfg.season.periods_per_day);
    std::tie(model.h1, model.h2) =
        cv_bandwidth(train_only.events_by_period, rule, folds, cfg.baseline.candidates);
    std::cerr << "cross-validated bandwidths: h1=" << model.h1 << " h2=" << model.h2 << "\n";
  }
  std::vector<SpatialPoint> train_pts;
  for (const auto& e : train) train_pts.push_back(e.location);

  std::set<int> targets;
  for (const auto& e : shifted_test) targets.insert(e.period);
  std::map<int, std::function<double(const SpatialPoint&)>> by_period;
  for (int t : targets) {
    if (available_history(t, model, rule).empty()) {
      // same pooled-training fallback the histogram method gets
      by_period[t] = [&model, &train_pts](const SpatialPoint& s) {
        return kde_density(s, train_pts, model.h1, model.h2);
      };
    } else {
      by_period[t] = [t, &model, &rule](const SpatialPoint& s) {
        return medic_kde_forecast(s, t, model, rule);
      };
    }
  }
  return densities_score_row("medic_kde", by_period, shifted_test, grid, cfg.pa_floor);
}

inline void write_score_csv(const std::string& path, const std::string& hash,
                            const std::vector<ScoreRow>& rows) {
  std::string out = "# config_hash=" + hash + "\n";
  out += "method,pa_nats,ci_half_width,n_events,n_draws\n";
  for (const auto& r : rows) {
    out += r.method + "," + detail::fmt_double(r.pa) + "," + detail::fmt_double(r.ci_half_width) +
           "," + std::to_string(r.n_events) + "," + std::to_string(r.n_draws) + "\n";
  }
  detail::atomic_write(path, out);
}

}  // namespace stmix
