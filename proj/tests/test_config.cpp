#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "stmix/config.hpp"

using namespace stmix;
using nlohmann::json;

namespace {

std::filesystem::path scratch_file(const std::string& name) {
  const auto dir = std::filesystem::current_path() / "config_scratch";
  std::filesystem::create_directories(dir);
  return dir / name;
}

json full_document() {
  return json::parse(R"({
    "model": {"k": 3, "variable_k": true,
              "bd": {"tau": 3.0, "k_max": 10, "birth_rate": 3.0, "stage_duration": 1.0}},
    "season": {"n_periods": 336, "n_blocks": 84, "periods_per_day": 12},
    "mcmc": {"n_iter": 2000, "burn_in": 500, "thin": 5, "rw_step_pi": 0.2,
             "rw_step_c": 0.15, "rw_step_rho": 0.02, "rw_step_lognu": 0.3,
             "adapt_steps": false, "init_kmeans": true, "seed": 99},
    "region": {"file": "region.csv", "grid_resolution": 0.25},
    "binning": {"epoch": "2008-02-06T00:00:00", "bin_hours": 2.0},
    "history": {"preset": "repeated_year", "weeks": 2, "year_offset_periods": 4368},
    "baseline": {"cell_size": 0.5, "h1": 0.7, "h2": 0.9, "cv": true,
                 "candidates": [[0.5, 0.5], [0.7, 0.9]]},
    "evaluation": {"pa_floor": 1e-12, "speed_kmh": 40.0,
                   "thresholds_seconds": [60, 120, 300]}
  })");
}

}  // namespace

TEST_CASE("empty document yields the defaults") {
  const RunConfig c = parse_config(json::object());
  CHECK(c.k == 2);
  CHECK_FALSE(c.variable_k);
  CHECK(c.season.n_periods == 336);
  CHECK(c.season.n_blocks == 84);
  CHECK(c.season.periods_per_day == 12);
  CHECK(c.mcmc.n_iter == 50000);
  CHECK(c.grid_resolution == 0.5);
  CHECK(c.binning.epoch.empty());
  CHECK(c.history_preset == "preceding_weeks");
  CHECK(c.history_weeks == 4);
  CHECK(c.pa_floor == 0.0);
  CHECK(c.speed_kmh == Catch::Approx(46.44));
}

TEST_CASE("every section round-trips into RunConfig") {
  const RunConfig c = parse_config(full_document());
  CHECK(c.k == 3);
  CHECK(c.variable_k);
  CHECK(c.bd.tau == 3.0);
  CHECK(c.bd.k_max == 10);
  CHECK(c.mcmc.n_iter == 2000);
  CHECK(c.mcmc.seed == 99);
  CHECK_FALSE(c.mcmc.adapt_steps);
  CHECK(c.mcmc.init_kmeans);
  CHECK(c.region_file == "region.csv");
  CHECK(c.grid_resolution == 0.25);
  CHECK(c.binning.epoch == "2008-02-06T00:00:00");
  CHECK(c.history_preset == "repeated_year");
  CHECK(c.history_year_offset == 4368);
  CHECK(c.baseline.cv);
  REQUIRE(c.baseline.candidates.size() == 2);
  CHECK(c.baseline.candidates[1] == std::pair<double, double>{0.7, 0.9});
  REQUIRE(c.thresholds_seconds.size() == 3);
  CHECK(c.thresholds_seconds[2] == 300.0);
}

TEST_CASE("unknown top-level section is rejected") {
  json j = json::object();
  j["sampler"] = {{"n_iter", 100}};  // typo for "mcmc"
  CHECK_THROWS_WITH(parse_config(j), Catch::Matchers::ContainsSubstring("sampler"));
}

TEST_CASE("block count must respect the daily grain") {
  json j = json::object();
  j["season"] = {{"n_periods", 336}, {"n_blocks", 85}, {"periods_per_day", 12}};
  CHECK_THROWS_AS(parse_config(j), std::invalid_argument);
}

TEST_CASE("validation failures name the offending knob") {
  auto expect_reject = [](json patch, const std::string& needle) {
    json j = json::object();
    for (auto& [key, value] : patch.items()) j[key] = value;
    CHECK_THROWS_WITH(parse_config(j), Catch::Matchers::ContainsSubstring(needle));
  };
  expect_reject({{"model", {{"k", 0}}}}, "k");
  expect_reject({{"region", {{"grid_resolution", 0.0}}}}, "grid_resolution");
  expect_reject({{"binning", {{"epoch", "2008-02-06T00:00:00"}, {"bin_hours", 3.0}}}},
                "periods_per_day");
  expect_reject({{"history", {{"preset", "preceeding_weeks"}}}}, "preset");
  expect_reject({{"history", {{"preset", "repeated_year"}}}}, "year_offset");
  expect_reject({{"history", {{"weeks", 0}}}}, "weeks");
  expect_reject({{"baseline", {{"h1", -1.0}}}}, "bandwidth");
  expect_reject({{"baseline", {{"cv", true}}}}, "candidate");
  expect_reject({{"evaluation", {{"pa_floor", -1.0}}}}, "pa_floor");
  expect_reject({{"evaluation", {{"speed_kmh", 0.0}}}}, "speed");
  expect_reject({{"evaluation", {{"thresholds_seconds", {60.0, 60.0}}}}}, "increasing");
}

TEST_CASE("candidate entries must be bandwidth pairs") {
  json j = json::object();
  j["baseline"] = {{"cv", true}, {"candidates", {{0.5, 0.5, 0.5}}}};
  CHECK_THROWS_AS(parse_config(j), std::invalid_argument);
}

TEST_CASE("history presets expand to the documented offsets") {
  RunConfig c;
  c.history_weeks = 4;
  const HistoryRule weekly = history_rule_from(c);
  CHECK(weekly.offsets == std::vector<int>{84, 168, 252, 336});

  c.history_preset = "repeated_year";
  c.history_weeks = 2;
  c.history_year_offset = 4368;
  const HistoryRule yearly = history_rule_from(c);
  CHECK(yearly.offsets == std::vector<int>{84, 168, 4452, 4536});
}

TEST_CASE("hash ignores formatting and key order") {
  const RunConfig a = parse_config(json::parse(full_document().dump()));
  const RunConfig b = parse_config(json::parse(full_document().dump(4)));
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);

  // same values with sections and keys listed in a different order
  json shuffled;
  shuffled["evaluation"] = full_document()["evaluation"];
  shuffled["season"] = json{{"periods_per_day", 12}, {"n_blocks", 84}, {"n_periods", 336}};
  shuffled["model"] = full_document()["model"];
  shuffled["mcmc"] = full_document()["mcmc"];
  shuffled["region"] = full_document()["region"];
  shuffled["binning"] = full_document()["binning"];
  shuffled["history"] = full_document()["history"];
  shuffled["baseline"] = full_document()["baseline"];
  CHECK(config_hash(parse_config(shuffled)) == config_hash(a));
}

TEST_CASE("hash moves when any value moves") {
  const RunConfig base = parse_config(full_document());
  json j = full_document();
  j["mcmc"]["seed"] = 100;
  CHECK(config_hash(parse_config(j)) != config_hash(base));

  j = full_document();
  j["evaluation"]["speed_kmh"] = 40.5;
  CHECK(config_hash(parse_config(j)) != config_hash(base));

  j = full_document();
  j["model"]["k"] = 4;
  CHECK(config_hash(parse_config(j)) != config_hash(base));
}

TEST_CASE("omitted sections hash the same as explicit defaults") {
  json j = json::object();
  j["mcmc"] = {{"n_iter", 50000}};
  CHECK(config_hash(parse_config(j)) == config_hash(parse_config(json::object())));
}

TEST_CASE("load_config reads a file and reports problems by path") {
  const auto good = scratch_file("good.json");
  {
    std::ofstream out(good);
    out << full_document().dump(2);
  }
  const RunConfig c = load_config(good.string());
  CHECK(c.k == 3);

  CHECK_THROWS_WITH(load_config((good.parent_path() / "missing.json").string()),
                    Catch::Matchers::ContainsSubstring("missing.json"));

  const auto bad = scratch_file("bad.json");
  {
    std::ofstream out(bad);
    out << "{ not json";
  }
  CHECK_THROWS_WITH(load_config(bad.string()), Catch::Matchers::ContainsSubstring("valid JSON"));
}
