// Command-line front end: fit posterior draws to an event table, predict
// density grids, score forecasts against held-out events, check base
// coverage, run residual diagnostics, simulate synthetic data and score the
// reference baselines. One subcommand per run; every output names the
// config hash it was produced under.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stmix/baselines.hpp"
#include "stmix/bdmcmc.hpp"
#include "stmix/config.hpp"
#include "stmix/evaluation.hpp"
#include "stmix/io.hpp"
#include "stmix/sampler.hpp"
#include "stmix/scoring.hpp"
#include "stmix/synthesis.hpp"
#include "stmix/validation.hpp"

namespace {

using namespace stmix;

std::string resolve_relative(const std::string& anchor_file, const std::string& path) {
  if (path.empty()) return path;
  const std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(anchor_file).parent_path() / p).string();
}

int thread_count() {
  const char* env = std::getenv("STMIX_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  if (n < 1 || n > 256) throw std::invalid_argument("STMIX_THREADS must be in 1..256");
  return n;
}

struct LoadedConfig {
  RunConfig cfg;
  std::string hash;
  std::string path;
};

LoadedConfig load_cfg(const std::string& path) {
  LoadedConfig lc;
  lc.cfg = load_config(path);
  lc.hash = config_hash(lc.cfg);
  lc.path = path;
  return lc;
}

StudyRegion region_of(const LoadedConfig& lc) {
  if (lc.cfg.region_file.empty())
    throw std::invalid_argument("config: this command needs region.file");
  return read_region(resolve_relative(lc.path, lc.cfg.region_file), lc.cfg.grid_resolution);
}

EventTable load_events(const std::string& path, const RunConfig& cfg) {
  EventTable t = read_events(path, cfg.season, cfg.binning.epoch, cfg.binning.bin_hours);
  for (const auto& msg : t.issues) std::cerr << path << ": " << msg << "\n";
  return t;
}

// ------------------------------------------------------------------- fit --

int cmd_fit(const std::string& config_path, const std::string& events_path,
            const std::string& out_path, const std::string& scalars_path) {
  const LoadedConfig lc = load_cfg(config_path);  // d | B checked before any sampling
  const EventTable table = load_events(events_path, lc.cfg);
  std::cerr << "fit: " << table.events.size() << " events (" << table.rejected
            << " rejected)\n";

  Hyperparams hp;
  if (table.events.size() >= 2) hp = hyperparams_from_data(table.events);

  const int n_chains = thread_count();
  std::vector<ChainResult> results(n_chains);
  std::vector<std::thread> workers;
  for (int i = 0; i < n_chains; ++i) {
    McmcConfig mc = lc.cfg.mcmc;
    mc.seed = lc.cfg.mcmc.seed + static_cast<std::uint64_t>(i);
    workers.emplace_back([&results, i, &table, hp, &lc, mc] {
      if (lc.cfg.variable_k)
        results[i] = run_bd_chain(table.events, hp, lc.cfg.season, mc, lc.cfg.bd, lc.cfg.k);
      else
        results[i] = run_chain(table.events, hp, lc.cfg.season, lc.cfg.k, mc);
    });
  }
  for (auto& w : workers) w.join();

  DrawArchive archive;
  archive.season = lc.cfg.season;
  archive.seed = lc.cfg.mcmc.seed;
  archive.config_hash = lc.hash;
  AcceptanceCounters total;
  for (const auto& r : results) {
    for (const auto& d : r.draws) archive.draws.push_back(d);
    total.pi.proposed += r.acceptance.pi.proposed;
    total.pi.accepted += r.acceptance.pi.accepted;
    total.c.proposed += r.acceptance.c.proposed;
    total.c.accepted += r.acceptance.c.accepted;
    total.rho.proposed += r.acceptance.rho.proposed;
    total.rho.accepted += r.acceptance.rho.accepted;
    total.lognu.proposed += r.acceptance.lognu.proposed;
    total.lognu.accepted += r.acceptance.lognu.accepted;
  }
  archive.acceptance = {{"pi", total.pi.rate()},
                        {"c", total.c.rate()},
                        {"rho", total.rho.rate()},
                        {"lognu", total.lognu.rate()}};
  write_draws(archive, out_path);
  if (!scalars_path.empty()) write_draw_scalars_csv(scalars_path, archive);
  std::cout << "fit: wrote " << archive.draws.size() << " draws from " << n_chains
            << " chain(s) to " << out_path << " (config " << lc.hash << ")\n";
  return 0;
}

// --------------------------------------------------------------- predict --

int cmd_predict(const std::string& config_path, const std::string& archive_path, int period,
                const std::string& grid_out) {
  const LoadedConfig lc = load_cfg(config_path);
  if (period < 1) throw std::invalid_argument("predict: period must be >= 1");
  const DrawArchive archive = read_draws(archive_path);
  const StudyRegion region = region_of(lc);
  const RegionGrid grid = build_region_grid(region);
  const auto prepared = prepare_draws(archive, grid);
  const ScoredDensity f = posterior_mean_density(prepared, archive.season);

  std::string out = "# config_hash=" + archive.config_hash + "\n";
  out += "x_index,y_index,x_km,y_km,density\n";
  for (size_t i = 0; i < grid.cells.size(); ++i) {
    const auto [ix, iy] = grid.cells[i];
    const SpatialPoint c = grid.centers[i];
    out += std::to_string(ix) + "," + std::to_string(iy) + "," + detail::fmt_double(c.x) + "," +
           detail::fmt_double(c.y) + "," + detail::fmt_double(f.evaluator(period, c)) + "\n";
  }
  detail::atomic_write(grid_out, out);
  std::cout << "predict: wrote " << grid.cells.size() << " cells for period " << period << " to "
            << grid_out << " (config " << archive.config_hash << ")\n";
  return 0;
}

// ----------------------------------------------------------------- score --

int cmd_score(const std::string& config_path, const std::string& archive_path,
              const std::string& test_path, const std::string& train_path,
              const std::string& out_path) {
  const LoadedConfig lc = load_cfg(config_path);
  const DrawArchive archive = read_draws(archive_path);
  const StudyRegion region = region_of(lc);
  const EventTable test = load_events(test_path, lc.cfg);
  if (test.events.empty()) throw std::runtime_error("score: test table is empty");

  const int horizon = lc.cfg.season.n_periods;
  const std::vector<Event> shifted_test = shift_periods(test.events, horizon);

  std::vector<ScoreRow> rows;
  rows.push_back(mixture_score_row(archive, shifted_test, region));
  if (!train_path.empty()) {
    const EventTable train = load_events(train_path, lc.cfg);
    if (train.events.empty()) throw std::runtime_error("score: train table is empty");
    std::vector<Event> combined = train.events;
    for (const auto& e : shifted_test) combined.push_back(e);
    const RegionGrid grid = build_region_grid(region);
    rows.push_back(medic_kde_row(lc.cfg, train.events, combined, shifted_test, grid));
    rows.push_back(medic_row(lc.cfg, train.events, combined, shifted_test, region, grid));
  }
  write_score_csv(out_path, lc.hash, rows);
  for (const auto& r : rows)
    std::cout << "score: " << r.method << " pa=" << detail::fmt_double(r.pa) << " +-"
              << detail::fmt_double(r.ci_half_width) << " nats\n";
  return 0;
}

// -------------------------------------------------------------- coverage --

int cmd_coverage(const std::string& config_path, const std::string& archive_path,
                 const std::string& test_path, const std::string& bases_path,
                 const std::string& out_path) {
  const LoadedConfig lc = load_cfg(config_path);
  const DrawArchive archive = read_draws(archive_path);
  const StudyRegion region = region_of(lc);
  const EventTable test = load_events(test_path, lc.cfg);
  if (test.events.empty()) throw std::runtime_error("coverage: test table is empty");

  ResponseTimeConfig rt;
  rt.bases = read_points(bases_path);
  rt.speed = lc.cfg.speed_kmh;
  if (!lc.cfg.thresholds_seconds.empty()) rt.thresholds = lc.cfg.thresholds_seconds;

  const RegionGrid grid = build_region_grid(region);
  const auto prepared = prepare_draws(archive, grid);
  const ScoredDensity f = posterior_mean_density(prepared, archive.season);

  std::set<int> period_set;
  for (const auto& e : test.events) period_set.insert(e.period);
  const std::vector<int> periods(period_set.begin(), period_set.end());
  const OperationalErrorResult res = operational_error(f, test.events, rt, region, periods);

  std::string out = "# config_hash=" + archive.config_hash + "\n";
  out += "# periods_used=" + std::to_string(res.periods_used) +
         " periods_empty=" + std::to_string(res.periods_empty) + "\n";
  out += "threshold_seconds,mean_error,ci_half_width\n";
  for (const auto& p : res.points) {
    out += detail::fmt_double(p.threshold_seconds) + "," + detail::fmt_double(p.mean_error) + "," +
           detail::fmt_double(p.ci_half_width) + "\n";
  }
  detail::atomic_write(out_path, out);
  std::cout << "coverage: wrote " << res.points.size() << " thresholds over "
            << res.periods_used << " periods to " << out_path << " (config "
            << archive.config_hash << ")\n";
  return 0;
}

// -------------------------------------------------------------- validate --

int cmd_validate(const std::string& config_path, const std::string& archive_path,
                 const std::string& test_path, const std::string& qq_out) {
  const LoadedConfig lc = load_cfg(config_path);
  const DrawArchive archive = read_draws(archive_path);
  const StudyRegion region = region_of(lc);
  const EventTable test = load_events(test_path, lc.cfg);
  if (test.events.empty()) throw std::runtime_error("validate: test table is empty");

  const UniformResiduals res = uniform_residuals(test.events, archive.draws, region, archive.season);
  const QqSummary qq = qq_summary(res);

  std::string out = "# config_hash=" + archive.config_hash + "\n";
  out += "theoretical,mean,lower,upper\n";
  for (size_t i = 0; i < qq.theoretical.size(); ++i) {
    out += detail::fmt_double(qq.theoretical[i]) + "," + detail::fmt_double(qq.mean_quantile[i]) +
           "," + detail::fmt_double(qq.lower[i]) + "," + detail::fmt_double(qq.upper[i]) + "\n";
  }
  detail::atomic_write(qq_out, out);

  long passed = 0;
  for (size_t i = 0; i < res.by_draw.size(); ++i) {
    const std::vector<double> u = residual_values(res, i);
    if (ks_statistic_uniform(u) < ks_critical_value(u.size(), 0.01)) passed += 1;
  }
  std::cout << "validate: KS at alpha=0.01 passed for " << passed << " of " << res.by_draw.size()
            << " draws; " << res.ties << " tied residuals; qq written to " << qq_out
            << " (config " << archive.config_hash << ")\n";
  return 0;
}

// -------------------------------------------------------------- simulate --

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

// Scenario document: seed, season, delta (scalar or per-period array),
// components, and either explicit block weights or CAR parameters the
// weights are drawn from (with a seed decoupled from the event stream).
Scenario scenario_from_json(const nlohmann::json& j, const std::string& anchor) {
  static const std::vector<std::string> known = {"seed",    "season",  "delta",
                                                 "components", "weights", "car",
                                                 "region",  "truncate_to_region"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument("scenario: unknown field '" + key + "'");
  }
  Scenario sc;
  if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("season")) {
    const auto& s = j.at("season");
    detail::read_field(s, "n_periods", sc.truth.season.n_periods);
    detail::read_field(s, "n_blocks", sc.truth.season.n_blocks);
    detail::read_field(s, "periods_per_day", sc.truth.season.periods_per_day);
  }
  validate(sc.truth.season);

  if (!j.contains("components") || j.at("components").empty())
    throw std::invalid_argument("scenario: needs a components list");
  for (const auto& cj : j.at("components")) {
    Component comp;
    const auto mu = cj.at("mu");
    const auto sig = cj.at("sigma");
    if (mu.size() != 2 || sig.size() != 2 || sig.at(0).size() != 2 || sig.at(1).size() != 2)
      throw std::invalid_argument("scenario: component needs mu[2] and sigma[2][2]");
    comp.mu << mu.at(0).get<double>(), mu.at(1).get<double>();
    comp.sigma << sig.at(0).at(0).get<double>(), sig.at(0).at(1).get<double>(),
        sig.at(1).at(0).get<double>(), sig.at(1).at(1).get<double>();
    sc.truth.components.push_back(comp);
  }
  const int k = static_cast<int>(sc.truth.components.size());
  const int nb = sc.truth.season.n_blocks;

  if (j.contains("weights")) {
    const auto& w = j.at("weights");
    if (static_cast<int>(w.size()) != nb)
      throw std::invalid_argument("scenario: weights needs one row per block");
    sc.truth.weights.resize(nb, k);
    for (int b = 0; b < nb; ++b) {
      if (static_cast<int>(w.at(b).size()) != k)
        throw std::invalid_argument("scenario: weights row size must equal component count");
      for (int r = 0; r < k; ++r) sc.truth.weights(b, r) = w.at(b).at(r).get<double>();
    }
    if (j.contains("car")) throw std::invalid_argument("scenario: give weights or car, not both");
  } else if (j.contains("car")) {
    const auto& cj = j.at("car");
    const Eigen::VectorXd c = json_vector(cj.at("c"));
    const Eigen::VectorXd rho = json_vector(cj.at("rho"));
    const Eigen::VectorXd nu2 = json_vector(cj.at("nu2"));
    if (c.size() != k - 1 || rho.size() != k - 1 || nu2.size() != k - 1)
      throw std::invalid_argument("scenario: car vectors need one entry per non-reference component");
    // decoupled stream so the weight draw does not disturb event reproducibility
    Rng wrng(sc.seed ^ 0x9e3779b97f4a7c15ULL);
    CarNeighborhood hood;
    hood.n_blocks = nb;
    hood.daily_lag = sc.truth.season.periods_per_day;
    sc.car.pi = sample_car_weights(c, rho, nu2, hood, wrng);
    sc.car.c = c;
    sc.car.rho = rho;
    sc.car.nu2 = nu2;
    sc.truth.weights.resize(nb, k);
    for (int b = 0; b < nb; ++b)
      sc.truth.weights.row(b) = inverse_logit(sc.car.pi.row(b).transpose()).transpose();
  } else {
    throw std::invalid_argument("scenario: needs weights or car");
  }

  if (!j.contains("delta")) throw std::invalid_argument("scenario: needs delta");
  if (j.at("delta").is_number()) {
    sc.delta = Eigen::VectorXd::Constant(sc.truth.season.n_periods, j.at("delta").get<double>());
  } else {
    sc.delta = json_vector(j.at("delta"));
  }

  if (j.contains("truncate_to_region"))
    sc.truncate_to_region = j.at("truncate_to_region").get<bool>();
  if (j.contains("region")) {
    const auto& r = j.at("region");
    double res = 0.5;
    detail::read_field(r, "grid_resolution", res);
    sc.region = read_region(resolve_relative(anchor, r.at("file").get<std::string>()), res);
  } else if (sc.truncate_to_region) {
    throw std::invalid_argument("scenario: truncation needs a region");
  }
  return sc;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_path) {
  std::ifstream in(scenario_path);
  if (!in) throw std::runtime_error("scenario: cannot open " + scenario_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("scenario: " + scenario_path + " is not valid JSON: " + e.what());
  }
  const Scenario sc = scenario_from_json(j, scenario_path);
  const std::string hash = detail::fnv1a_hex(j.dump());
  const std::vector<Event> events = simulate(sc);
  write_events_csv(out_path, events, "config_hash=" + hash);
  std::cout << "simulate: wrote " << events.size() << " events to " << out_path << " (config "
            << hash << ")\n";
  return 0;
}

// -------------------------------------------------------------- baseline --

int cmd_baseline(const std::string& config_path, const std::string& method,
                 const std::string& train_path, const std::string& test_path,
                 const std::string& out_path) {
  const LoadedConfig lc = load_cfg(config_path);
  const StudyRegion region = region_of(lc);
  const EventTable train = load_events(train_path, lc.cfg);
  const EventTable test = load_events(test_path, lc.cfg);
  if (train.events.empty()) throw std::runtime_error("baseline: train table is empty");
  if (test.events.empty()) throw std::runtime_error("baseline: test table is empty");

  const std::vector<Event> shifted_test = shift_periods(test.events, lc.cfg.season.n_periods);
  std::vector<Event> combined = train.events;
  for (const auto& e : shifted_test) combined.push_back(e);
  const RegionGrid grid = build_region_grid(region);

  std::vector<ScoreRow> rows;
  if (method == "medic")
    rows.push_back(medic_row(lc.cfg, train.events, combined, shifted_test, region, grid));
  else
    rows.push_back(medic_kde_row(lc.cfg, train.events, combined, shifted_test, grid));
  write_score_csv(out_path, lc.hash, rows);
  std::cout << "baseline: " << rows[0].method << " pa=" << detail::fmt_double(rows[0].pa) << " +-"
            << detail::fmt_double(rows[0].ci_half_width) << " nats\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatio-temporal mixture demand model"};
  app.require_subcommand(1);

  std::string config_path, events_path, out_path, archive_path, test_path, train_path;
  std::string bases_path, qq_out, grid_out, scenario_path, scalars_path, method;
  int period = 0;

  auto* fit = app.add_subcommand("fit", "Sample the posterior for an event table");
  fit->add_option("--config", config_path)->required();
  fit->add_option("--events", events_path)->required();
  fit->add_option("--out", out_path)->required();
  fit->add_option("--scalars-out", scalars_path);

  auto* predict = app.add_subcommand("predict", "Density grid for a future period");
  predict->add_option("--config", config_path)->required();
  predict->add_option("--archive", archive_path)->required();
  predict->add_option("--period", period)->required();
  predict->add_option("--grid-out", grid_out)->required();

  auto* score = app.add_subcommand("score", "Predictive accuracy on held-out events");
  score->add_option("--config", config_path)->required();
  score->add_option("--archive", archive_path)->required();
  score->add_option("--test", test_path)->required();
  score->add_option("--train", train_path, "also score the reference baselines");
  score->add_option("--out", out_path)->required();

  auto* coverage = app.add_subcommand("coverage", "Operational error against base locations");
  coverage->add_option("--config", config_path)->required();
  coverage->add_option("--archive", archive_path)->required();
  coverage->add_option("--test", test_path)->required();
  coverage->add_option("--bases", bases_path)->required();
  coverage->add_option("--out", out_path)->required();

  auto* validate_cmd = app.add_subcommand("validate", "Residual uniformity diagnostics");
  validate_cmd->add_option("--config", config_path)->required();
  validate_cmd->add_option("--archive", archive_path)->required();
  validate_cmd->add_option("--test", test_path)->required();
  validate_cmd->add_option("--qq-out", qq_out)->required();

  auto* simulate_cmd = app.add_subcommand("simulate", "Draw events from a scenario");
  simulate_cmd->add_option("--scenario", scenario_path)->required();
  simulate_cmd->add_option("--out", out_path)->required();

  auto* baseline = app.add_subcommand("baseline", "Score a reference method alone");
  baseline->add_option("--config", config_path)->required();
  baseline->add_option("--method", method)->required()->check(CLI::IsMember({"medic", "medic-kde"}));
  baseline->add_option("--train", train_path)->required();
  baseline->add_option("--test", test_path)->required();
  baseline->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return cmd_fit(config_path, events_path, out_path, scalars_path);
    if (predict->parsed()) return cmd_predict(config_path, archive_path, period, grid_out);
    if (score->parsed()) return cmd_score(config_path, archive_path, test_path, train_path, out_path);
    if (coverage->parsed())
      return cmd_coverage(config_path, archive_path, test_path, bases_path, out_path);
    if (validate_cmd->parsed())
      return cmd_validate(config_path, archive_path, test_path, qq_out);
    if (simulate_cmd->parsed()) return cmd_simulate(scenario_path, out_path);
    if (baseline->parsed())
      return cmd_baseline(config_path, method, train_path, test_path, out_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
