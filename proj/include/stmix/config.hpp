#pragma once

// One JSON file drives every command-line run: model size, seasonal layout,
// sampler settings, file locations and evaluation knobs. Parsing normalizes
// the document into RunConfig and the canonical re-serialization is hashed,
// so two configs agree exactly when their hashes do.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stmix/baselines.hpp"
#include "stmix/bdmcmc.hpp"
#include "stmix/evaluation.hpp"
#include "stmix/sampler.hpp"
#include "stmix/seasonality.hpp"

namespace stmix {

struct BinningSpec {
  std::string epoch;      // ISO 8601 start of period 1; empty = pre-binned input
  double bin_hours{2.0};  // width of one period
};

struct BaselineConfig {
  double cell_size{1.0};  // km, historical-average lattice
  double h1{1.0};
  double h2{1.0};
  bool cv{false};  // pick bandwidths by cross validation instead
  std::vector<std::pair<double, double>> candidates;
};

struct RunConfig {
  int k{2};
  bool variable_k{false};
  BirthDeathConfig bd;
  SeasonalityConfig season;
  McmcConfig mcmc;
  std::string region_file;
  double grid_resolution{0.5};
  BinningSpec binning;
  std::string history_preset{"preceding_weeks"};
  int history_weeks{4};
  int history_year_offset{0};
  BaselineConfig baseline;
  double pa_floor{0.0};
  double speed_kmh{46.44};
  std::vector<double> thresholds_seconds;
};

inline void validate(const RunConfig& cfg) {
  if (!cfg.variable_k && cfg.k < 1) throw std::invalid_argument("config: k must be >= 1");
  validate(cfg.season);
  validate(cfg.mcmc);
  if (cfg.variable_k) validate(cfg.bd);
  if (!(cfg.grid_resolution > 0.0))
    throw std::invalid_argument("config: grid_resolution must be positive");
  if (!cfg.binning.epoch.empty()) {
    if (!(cfg.binning.bin_hours > 0.0))
      throw std::invalid_argument("config: bin_hours must be positive");
    const double per_day = 24.0 / cfg.binning.bin_hours;
    if (std::abs(per_day - cfg.season.periods_per_day) > 1e-9)
      throw std::invalid_argument(
          "config: bin_hours and periods_per_day disagree about the length of a day");
  }
  if (cfg.history_preset != "preceding_weeks" && cfg.history_preset != "repeated_year")
    throw std::invalid_argument("config: unknown history preset '" + cfg.history_preset + "'");
  if (cfg.history_weeks < 1) throw std::invalid_argument("config: history_weeks must be >= 1");
  if (cfg.history_preset == "repeated_year" && cfg.history_year_offset < 1)
    throw std::invalid_argument("config: repeated_year preset needs history_year_offset >= 1");
  if (!(cfg.baseline.cell_size > 0.0) || !(cfg.baseline.h1 > 0.0) || !(cfg.baseline.h2 > 0.0))
    throw std::invalid_argument("config: baseline cell size and bandwidths must be positive");
  if (cfg.baseline.cv && cfg.baseline.candidates.empty())
    throw std::invalid_argument("config: baseline cv needs a candidate list");
  if (!(cfg.pa_floor >= 0.0)) throw std::invalid_argument("config: pa_floor must be >= 0");
  if (!(cfg.speed_kmh > 0.0)) throw std::invalid_argument("config: speed_kmh must be positive");
  for (size_t i = 0; i < cfg.thresholds_seconds.size(); ++i) {
    if (!(cfg.thresholds_seconds[i] > 0.0))
      throw std::invalid_argument("config: thresholds must be positive");
    if (i > 0 && cfg.thresholds_seconds[i] <= cfg.thresholds_seconds[i - 1])
      throw std::invalid_argument("config: thresholds must be strictly increasing");
  }
}

inline HistoryRule history_rule_from(const RunConfig& cfg) {
  const int per_week = 7 * cfg.season.periods_per_day;
  if (cfg.history_preset == "repeated_year")
    return repeated_year_rule(cfg.history_weeks, per_week, cfg.history_year_offset);
  return preceding_weeks_rule(cfg.history_weeks, per_week);
}

namespace detail {

inline nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json j;
  j["model"] = {{"k", c.k},
                {"variable_k", c.variable_k},
                {"bd",
                 {{"tau", c.bd.tau},
                  {"k_max", c.bd.k_max},
                  {"birth_rate", c.bd.birth_rate},
                  {"stage_duration", c.bd.stage_duration}}}};
  j["season"] = {{"n_periods", c.season.n_periods},
                 {"n_blocks", c.season.n_blocks},
                 {"periods_per_day", c.season.periods_per_day}};
  j["mcmc"] = {{"n_iter", c.mcmc.n_iter},     {"burn_in", c.mcmc.burn_in},
               {"thin", c.mcmc.thin},         {"rw_step_pi", c.mcmc.rw_step_pi},
               {"rw_step_c", c.mcmc.rw_step_c}, {"rw_step_rho", c.mcmc.rw_step_rho},
               {"rw_step_lognu", c.mcmc.rw_step_lognu}, {"adapt_steps", c.mcmc.adapt_steps},
               {"init_kmeans", c.mcmc.init_kmeans},     {"seed", c.mcmc.seed}};
  j["region"] = {{"file", c.region_file}, {"grid_resolution", c.grid_resolution}};
  j["binning"] = {{"epoch", c.binning.epoch}, {"bin_hours", c.binning.bin_hours}};
  j["history"] = {{"preset", c.history_preset},
                  {"weeks", c.history_weeks},
                  {"year_offset_periods", c.history_year_offset}};
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& [h1, h2] : c.baseline.candidates) cands.push_back({h1, h2});
  j["baseline"] = {{"cell_size", c.baseline.cell_size},
                   {"h1", c.baseline.h1},
                   {"h2", c.baseline.h2},
                   {"cv", c.baseline.cv},
                   {"candidates", cands}};
  j["evaluation"] = {{"pa_floor", c.pa_floor},
                     {"speed_kmh", c.speed_kmh},
                     {"thresholds_seconds", c.thresholds_seconds}};
  return j;
}

template <typename T>
void read_field(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

// Parses a config document; absent fields keep their defaults, unknown
// top-level sections are an error so typos cannot silently fall back.
inline RunConfig parse_config(const nlohmann::json& j) {
  static const std::vector<std::string> known = {"model",   "season",  "mcmc",      "region",
                                                 "binning", "history", "baseline",  "evaluation"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool ok = false;
    for (const auto& k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument("config: unknown section '" + key + "'");
  }
  RunConfig c;
  using detail::read_field;
  if (j.contains("model")) {
    const auto& m = j.at("model");
    read_field(m, "k", c.k);
    read_field(m, "variable_k", c.variable_k);
    if (m.contains("bd")) {
      const auto& b = m.at("bd");
      read_field(b, "tau", c.bd.tau);
      read_field(b, "k_max", c.bd.k_max);
      read_field(b, "birth_rate", c.bd.birth_rate);
      read_field(b, "stage_duration", c.bd.stage_duration);
    }
  }
  if (j.contains("season")) {
    const auto& s = j.at("season");
    read_field(s, "n_periods", c.season.n_periods);
    read_field(s, "n_blocks", c.season.n_blocks);
    read_field(s, "periods_per_day", c.season.periods_per_day);
  }
  if (j.contains("mcmc")) {
    const auto& m = j.at("mcmc");
    read_field(m, "n_iter", c.mcmc.n_iter);
    read_field(m, "burn_in", c.mcmc.burn_in);
    read_field(m, "thin", c.mcmc.thin);
    read_field(m, "rw_step_pi", c.mcmc.rw_step_pi);
    read_field(m, "rw_step_c", c.mcmc.rw_step_c);
    read_field(m, "rw_step_rho", c.mcmc.rw_step_rho);
    read_field(m, "rw_step_lognu", c.mcmc.rw_step_lognu);
    read_field(m, "adapt_steps", c.mcmc.adapt_steps);
    read_field(m, "init_kmeans", c.mcmc.init_kmeans);
    read_field(m, "seed", c.mcmc.seed);
  }
  if (j.contains("region")) {
    const auto& r = j.at("region");
    read_field(r, "file", c.region_file);
    read_field(r, "grid_resolution", c.grid_resolution);
  }
  if (j.contains("binning")) {
    const auto& b = j.at("binning");
    read_field(b, "epoch", c.binning.epoch);
    read_field(b, "bin_hours", c.binning.bin_hours);
  }
  if (j.contains("history")) {
    const auto& h = j.at("history");
    read_field(h, "preset", c.history_preset);
    read_field(h, "weeks", c.history_weeks);
    read_field(h, "year_offset_periods", c.history_year_offset);
  }
  if (j.contains("baseline")) {
    const auto& b = j.at("baseline");
    read_field(b, "cell_size", c.baseline.cell_size);
    read_field(b, "h1", c.baseline.h1);
    read_field(b, "h2", c.baseline.h2);
    read_field(b, "cv", c.baseline.cv);
    if (b.contains("candidates")) {
      for (const auto& pair : b.at("candidates")) {
        if (!pair.is_array() || pair.size() != 2)
          throw std::invalid_argument("config: each bandwidth candidate is a [h1, h2] pair");
        c.baseline.candidates.emplace_back(pair[0].get<double>(), pair[1].get<double>());
      }
    }
  }
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    read_field(e, "pa_floor", c.pa_floor);
    read_field(e, "speed_kmh", c.speed_kmh);
    read_field(e, "thresholds_seconds", c.thresholds_seconds);
  }
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

namespace detail {

inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= static_cast<std::uint64_t>(ch);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace detail

// FNV-1a over the canonical serialization: hashes agree exactly when the
// normalized configs do, regardless of formatting or key order in the file.
inline std::string config_hash(const RunConfig& cfg) {
  return detail::fnv1a_hex(detail::config_to_json(cfg).dump());
}

}  // namespace stmix
