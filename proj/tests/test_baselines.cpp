#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <vector>

#include "helpers.hpp"
#include "stmix/baselines.hpp"

using namespace stmix;

namespace {

GridSpec unit_grid(int nx, int ny, double cell = 1.0) {
  GridSpec g;
  g.origin = {0.0, 0.0};
  g.cell_size = cell;
  g.nx = nx;
  g.ny = ny;
  return g;
}

// one-cell histogram concentrated at (ix, iy)
Eigen::MatrixXd point_mass(const GridSpec& g, int ix, int iy) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(g.nx, g.ny);
  m(ix, iy) = 1.0 / (g.cell_size * g.cell_size);
  return m;
}

}  // namespace

TEST_CASE("cell histogram densities") {
  const GridSpec g = unit_grid(10, 8, 0.5);

  SECTION("all events in one cell concentrate the density there") {
    std::vector<SpatialPoint> ev(7, {1.3, 2.1});
    const auto d = cell_histogram_density(ev, g);
    REQUIRE(d.has_value());
    CHECK((*d)(2, 4) == Catch::Approx(1.0 / 0.25).margin(1e-15));
    CHECK(d->sum() == Catch::Approx(1.0 / 0.25).margin(1e-12));
  }

  SECTION("an even split puts half the mass in each cell") {
    std::vector<SpatialPoint> ev = {{0.1, 0.1}, {0.2, 0.3}, {4.9, 3.9}, {4.6, 3.6}};
    const auto d = cell_histogram_density(ev, g);
    REQUIRE(d.has_value());
    CHECK((*d)(0, 0) == Catch::Approx(0.5 / 0.25).margin(1e-15));
    CHECK((*d)(9, 7) == Catch::Approx(0.5 / 0.25).margin(1e-15));
  }

  SECTION("random histograms integrate to one") {
    Rng rng(401);
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<SpatialPoint> ev;
      const int n = 1 + static_cast<int>(120 * draw_uniform(rng));
      for (int i = 0; i < n; ++i) ev.push_back({5.0 * draw_uniform(rng), 4.0 * draw_uniform(rng)});
      const auto d = cell_histogram_density(ev, g);
      REQUIRE(d.has_value());
      CHECK(d->sum() * 0.25 == Catch::Approx(1.0).margin(1e-12));
      CHECK(d->minCoeff() >= 0.0);
    }
  }

  SECTION("boundary points fold into the last cell") {
    std::vector<SpatialPoint> ev = {{5.0, 4.0}};
    const auto d = cell_histogram_density(ev, g);
    REQUIRE(d.has_value());
    CHECK((*d)(9, 7) > 0.0);
  }

  SECTION("empty periods are flagged, stray events rejected") {
    CHECK_FALSE(cell_histogram_density({}, g).has_value());
    CHECK_THROWS_AS(cell_histogram_density({{-0.1, 1.0}}, g), std::invalid_argument);
    CHECK_THROWS_AS(cell_histogram_density({{1.0, 4.2}}, g), std::invalid_argument);
    GridSpec bad = g;
    bad.cell_size = 0.0;
    CHECK_THROWS_AS(cell_histogram_density({{1.0, 1.0}}, bad), std::invalid_argument);
  }

  SECTION("lookups agree with the stored cells and vanish outside") {
    const auto d = cell_histogram_density({{1.3, 2.1}}, g);
    CHECK(cell_value_at(*d, g, {1.4, 2.2}) == (*d)(2, 4));
    CHECK(cell_value_at(*d, g, {99.0, 0.0}) == 0.0);
  }
}

TEST_CASE("historical averaging of cell densities") {
  const GridSpec g = unit_grid(4, 4);
  const HistoryRule rule{{2, 4, 6}};

  SECTION("identical histories come back unchanged") {
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    const Eigen::MatrixXd d = point_mass(g, 1, 2);
    hist[8] = d;
    hist[6] = d;
    hist[4] = d;
    const Eigen::MatrixXd f = medic_forecast(10, hist, rule);
    CHECK((f - d).cwiseAbs().maxCoeff() == 0.0);
  }

  SECTION("two disjoint histories average to half each") {
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    hist[8] = point_mass(g, 0, 0);
    hist[6] = point_mass(g, 3, 3);
    const Eigen::MatrixXd f = medic_forecast(10, hist, rule);
    CHECK(f(0, 0) == Catch::Approx(0.5).margin(1e-15));
    CHECK(f(3, 3) == Catch::Approx(0.5).margin(1e-15));
    CHECK(f.sum() == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("an eight-entry two-year rule averages exactly those eight periods") {
    const int w = 5;  // periods per week
    const int year = 123;
    const HistoryRule two_year = repeated_year_rule(4, w, year);
    REQUIRE(two_year.offsets.size() == 8);
    const int target = 600;
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    Eigen::MatrixXd expect = Eigen::MatrixXd::Zero(g.nx, g.ny);
    Rng rng(409);
    for (int o : two_year.offsets) {
      Eigen::MatrixXd d = Eigen::MatrixXd::Zero(g.nx, g.ny);
      for (int i = 0; i < g.nx * g.ny; ++i) d(i / g.ny, i % g.ny) = draw_gamma(rng, 1.0, 1.0);
      d /= d.sum();
      hist[target - o] = d;
      expect += d / 8.0;
    }
    // decoys the rule must not touch: adjacent periods and the target itself
    hist[target] = point_mass(g, 0, 0);
    hist[target - 1] = point_mass(g, 1, 1);
    hist[target - year] = point_mass(g, 2, 2);
    const Eigen::MatrixXd f = medic_forecast(target, hist, two_year);
    CHECK((f - expect).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("missing and empty histories are skipped") {
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    hist[8] = std::nullopt;
    hist[6] = point_mass(g, 2, 1);
    const Eigen::MatrixXd f = medic_forecast(10, hist, rule);
    CHECK((f - *hist[6]).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(medic_forecast(2, hist, rule), std::runtime_error);
  }

  SECTION("linear in the history set") {
    Rng rng(419);
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    for (int p : {4, 6, 8}) {
      Eigen::MatrixXd d(g.nx, g.ny);
      for (int i = 0; i < d.size(); ++i) d(i / g.ny, i % g.ny) = draw_gamma(rng, 1.0, 1.0);
      hist[p] = d / d.sum();
    }
    const Eigen::MatrixXd sub_a = medic_forecast(10, hist, HistoryRule{{2}});
    const Eigen::MatrixXd sub_b = medic_forecast(10, hist, HistoryRule{{4, 6}});
    const Eigen::MatrixXd pooled = medic_forecast(10, hist, rule);
    const Eigen::MatrixXd mix = (1.0 * sub_a + 2.0 * sub_b) / 3.0;
    CHECK((pooled - mix).cwiseAbs().maxCoeff() < 1e-14);
  }

  SECTION("shape mismatches and bad rules are rejected") {
    std::map<int, std::optional<Eigen::MatrixXd>> hist;
    hist[8] = point_mass(g, 0, 0);
    hist[6] = Eigen::MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(medic_forecast(10, hist, rule), std::invalid_argument);
    CHECK_THROWS_AS(medic_forecast(10, hist, HistoryRule{}), std::invalid_argument);
    CHECK_THROWS_AS(medic_forecast(10, hist, HistoryRule{{0}}), std::invalid_argument);
  }
}

TEST_CASE("history rule presets") {
  const HistoryRule weekly = preceding_weeks_rule(4, 84);
  CHECK(weekly.offsets == std::vector<int>{84, 168, 252, 336});
  const HistoryRule two_year = repeated_year_rule(2, 84, 4368);
  CHECK(two_year.offsets == std::vector<int>{84, 168, 4452, 4536});
  CHECK_THROWS_AS(preceding_weeks_rule(0, 84), std::invalid_argument);
  CHECK_THROWS_AS(repeated_year_rule(2, 84, 0), std::invalid_argument);
}

TEST_CASE("kernel density estimates") {
  Rng rng(421);

  SECTION("single event evaluated at itself") {
    const std::vector<SpatialPoint> ev = {{3.0, 4.0}};
    const double got = kde_density({3.0, 4.0}, ev, 0.7, 1.3);
    CHECK(got == Catch::Approx(1.0 / (2.0 * std::numbers::pi * 0.7 * 1.3)).epsilon(1e-14));
  }

  SECTION("vanishes far from the data") {
    const std::vector<SpatialPoint> ev = {{0.0, 0.0}, {1.0, 1.0}};
    CHECK(kde_density({500.0, 500.0}, ev, 1.0, 1.0) < 1e-300);
  }

  SECTION("matches the generic bivariate normal oracle") {
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    const double h1 = 0.8, h2 = 1.7;
    cov(0, 0) = h1 * h1;
    cov(1, 1) = h2 * h2;
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<SpatialPoint> ev;
      for (int i = 0; i < 25; ++i) ev.push_back({3.0 * draw_normal(rng), 3.0 * draw_normal(rng)});
      const SpatialPoint s{draw_normal(rng), draw_normal(rng)};
      double oracle = 0.0;
      for (const auto& e : ev) oracle += testutil::gaussian2_oracle(s.x, s.y, e.x, e.y, cov);
      oracle /= ev.size();
      CHECK(kde_density(s, ev, h1, h2) == Catch::Approx(oracle).epsilon(1e-12));
    }
  }

  SECTION("degenerate inputs are rejected") {
    CHECK_THROWS_AS(kde_density({0, 0}, {}, 1.0, 1.0), std::runtime_error);
    CHECK_THROWS_AS(kde_density({0, 0}, {{0.0, 0.0}}, 0.0, 1.0), std::invalid_argument);
    KdeModel m;
    m.events_by_period[3] = {{0.0, 0.0}};
    CHECK_THROWS_AS(kde_density({0, 0}, 7, m), std::runtime_error);
    CHECK(kde_density({0.0, 0.0}, 3, m) > 0.0);
  }
}

TEST_CASE("historical averaging of kernel densities") {
  Rng rng(431);
  KdeModel m;
  m.h1 = 0.5;
  m.h2 = 0.5;
  for (int p : {2, 4, 6})
    for (int i = 0; i < 20; ++i)
      m.events_by_period[p].push_back({5.0 + draw_normal(rng), 5.0 + draw_normal(rng)});
  const HistoryRule rule{{4, 6, 8}};

  SECTION("single available history reduces to that period's estimate") {
    // target 10 sees only periods 6, 4 and 2; restrict to one
    KdeModel one = m;
    one.events_by_period.erase(4);
    one.events_by_period.erase(2);
    const SpatialPoint s{4.2, 5.7};
    CHECK(medic_kde_forecast(s, 10, one, rule) ==
          Catch::Approx(kde_density(s, m.events_by_period[6], 0.5, 0.5)).epsilon(1e-14));
  }

  SECTION("pointwise mean over the available histories") {
    const SpatialPoint s{5.9, 4.4};
    double expect = 0.0;
    for (int p : {2, 4, 6}) expect += kde_density(s, m.events_by_period[p], 0.5, 0.5);
    expect /= 3.0;
    CHECK(medic_kde_forecast(s, 10, m, rule) == Catch::Approx(expect).epsilon(1e-13));
    CHECK_THROWS_AS(medic_kde_forecast(s, 3, m, rule), std::runtime_error);
  }

  SECTION("integrates to one over a generous box") {
    StudyRegion box;
    box.vertices = {{-3.0, -3.0}, {13.0, -3.0}, {13.0, 13.0}, {-3.0, 13.0}};
    box.grid_resolution = 0.1;
    const RegionGrid grid = build_region_grid(box);
    const double mass = density_region_mass(
        [&](const SpatialPoint& s) { return medic_kde_forecast(s, 10, m, rule); }, grid);
    CHECK(mass == Catch::Approx(1.0).margin(1e-3));
  }
}

TEST_CASE("bandwidth cross validation") {
  Rng rng(433);
  const int ppw = 4;  // periods per week
  std::map<int, std::vector<SpatialPoint>> events;
  std::vector<int> periods;
  for (int t = 1; t <= 4 * ppw; ++t) {
    periods.push_back(t);
    for (int i = 0; i < 30; ++i)
      events[t].push_back({5.0 + 1.5 * draw_normal(rng), 5.0 + 1.5 * draw_normal(rng)});
  }
  const HistoryRule rule = preceding_weeks_rule(2, ppw);
  const auto folds = weekly_folds(periods, ppw);
  REQUIRE(folds.size() == 4);

  SECTION("weekly folds group by position in the sequence") {
    CHECK(folds[0] == std::vector<int>{1, 2, 3, 4});
    CHECK(folds[3] == std::vector<int>{13, 14, 15, 16});
  }

  SECTION("a single candidate is returned as-is") {
    const auto best = cv_bandwidth(events, rule, folds, {{0.37, 0.52}});
    CHECK(best.first == 0.37);
    CHECK(best.second == 0.52);
  }

  SECTION("the plausible bandwidth beats the extremes, deterministically") {
    const std::vector<std::pair<double, double>> cands = {
        {0.001, 0.001}, {1.0, 1.0}, {100.0, 100.0}};
    const auto best = cv_bandwidth(events, rule, folds, cands);
    CHECK(best.first == 1.0);
    CHECK(best.second == 1.0);
    const auto again = cv_bandwidth(events, rule, folds, cands);
    CHECK(again == best);
  }

  SECTION("ties break toward the smaller bandwidth sum") {
    // both candidates underflow every held-out density, so both score -inf
    const auto best = cv_bandwidth(events, rule, folds, {{1e-4, 1e-4}, {1e-5, 1e-5}});
    CHECK(best.first == 1e-5);
  }

  SECTION("degenerate setups are rejected") {
    CHECK_THROWS_AS(cv_bandwidth(events, rule, folds, {}), std::invalid_argument);
    CHECK_THROWS_AS(cv_bandwidth(events, rule, {folds[0]}, {{1.0, 1.0}}),
                    std::invalid_argument);
    // nothing has history: every period is in the held-out week it needs
    std::map<int, std::vector<SpatialPoint>> lone;
    lone[1] = events[1];
    lone[2] = events[2];
    CHECK_THROWS_AS(cv_bandwidth(lone, rule, {{1}, {2}}, {{1.0, 1.0}}), std::invalid_argument);
  }
}
