#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "kinlim/config.hpp"

using namespace kinlim;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "grid_size": 16,
    "velocity_model": {"velocities": [-1.0, 1.0], "weights": [0.5, 0.5]},
    "noise_model": {"modes": [{"shape": "cos:1", "chain": {"telegraph": {"sigma": 1.0, "rate": 2.0}}}]},
    "epsilons": [0.2, 0.1],
    "final_time": 0.1,
    "functionals": [{"id": "lin", "kind": "linear", "weight": "cos:1"}]
  })");
}

}  // namespace

TEST(Config, MinimalParsesWithDefaults) {
  const auto c = ExperimentConfig::from_json(minimal());
  EXPECT_EQ(c.dimension, 1);
  EXPECT_EQ(c.grid_size, 16);
  EXPECT_EQ(c.output_times, std::vector<double>{0.1});
  EXPECT_DOUBLE_EQ(c.dt_factor, 0.1);
  EXPECT_EQ(c.modes.size(), 1u);
  const auto e = Experiment::build(c);
  EXPECT_EQ(e.noise->num_modes(), 1u);
  EXPECT_DOUBLE_EQ(e.noise->autocovariance(0), 0.5);
  for (double r : e.rho0) EXPECT_DOUBLE_EQ(r, 1.0);
}

TEST(Config, UnknownKeysRejectedAtEveryLevel) {
  for (const char* path : {"/extra", "/velocity_model/extra", "/noise_model/extra", "/noise_model/modes/0/extra",
                           "/noise_model/modes/0/chain/telegraph/extra", "/functionals/0/extra"}) {
    auto j = minimal();
    j[json::json_pointer(path)] = 1;
    EXPECT_THROW(ExperimentConfig::from_json(j), ConfigError) << path;
  }
}

TEST(Config, ValidationErrors) {
  auto expect_bad = [](auto edit) {
    auto j = minimal();
    edit(j);
    EXPECT_THROW(Experiment::build(ExperimentConfig::from_json(j)), ConfigError) << j.dump();
  };
  expect_bad([](json& j) { j["epsilons"] = {0.1, 0.2}; });
  expect_bad([](json& j) { j["epsilons"] = {0.1, 0.1}; });
  expect_bad([](json& j) { j["epsilons"] = {1.5}; });
  expect_bad([](json& j) { j["epsilons"] = json::array(); });
  expect_bad([](json& j) { j["grid_size"] = 24; });
  expect_bad([](json& j) { j["grid_size"] = 2; });
  expect_bad([](json& j) { j["output_times"] = {0.05}; });
  expect_bad([](json& j) { j["output_times"] = {0.05, 0.02, 0.1}; });
  expect_bad([](json& j) { j["final_time"] = -1.0; });
  expect_bad([](json& j) { j["velocity_model"]["weights"] = {0.3, 0.3}; });
  expect_bad([](json& j) { j["velocity_model"]["velocities"] = {1.0, 2.0}; });
  expect_bad([](json& j) { j["functionals"][0]["kind"] = "cubic"; });
  expect_bad([](json& j) { j["functionals"].push_back(j["functionals"][0]); });
  expect_bad([](json& j) { j["noise_model"]["modes"][0]["shape"] = "tan:1"; });
  expect_bad([](json& j) { j["noise_model"]["modes"][0]["shape"] = "cos:1,1"; });
  expect_bad([](json& j) { j["noise_model"]["modes"][0]["chain"] = {{"states", {1.0, 2.0}}, {"rates", {{0, 1}, {1, 0}}}}; });
  expect_bad([](json& j) { j["epsilons"] = "0.1"; });
  expect_bad([](json& j) { j.erase("velocity_model"); });
}

TEST(Config, RequireEnsembles) {
  auto j = minimal();
  j["ensemble_size"] = 99;
  EXPECT_THROW(ExperimentConfig::from_json(j).require_ensembles(100), ConfigError);
  j["ensemble_size"] = 100;
  EXPECT_NO_THROW(ExperimentConfig::from_json(j).require_ensembles(100));
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(ExperimentConfig::load("/nonexistent/config.json"), ConfigError);
}

TEST(Shape, Grammar) {
  const Grid g(1, 16);
  const double tau = 2.0 * std::numbers::pi;
  const auto c3 = parse_shape("cos:3", g);
  const auto s2 = parse_shape("sin:2", g);
  const auto num = parse_shape(2.5, g);
  const auto terms = parse_shape(json::parse(R"({"terms": [{"shape": "const", "amplitude": 1}, {"shape": "cos:1", "amplitude": 0.5}]})"), g);
  const auto four = parse_shape(json::parse(R"({"fourier": [[2, 0.25, -1.0]]})"), g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const double x = g.point(p)[0];
    EXPECT_NEAR(c3[p], std::cos(tau * 3 * x), 1e-14);
    EXPECT_NEAR(s2[p], std::sin(tau * 2 * x), 1e-14);
    EXPECT_EQ(num[p], 2.5);
    EXPECT_NEAR(terms[p], 1.0 + 0.5 * std::cos(tau * x), 1e-14);
    EXPECT_NEAR(four[p], 0.25 * std::cos(tau * 2 * x) - std::sin(tau * 2 * x), 1e-14);
  }
}

TEST(Shape, TwoDimensionalWaveVector) {
  const Grid g(2, 8);
  const auto f = parse_shape("cos:1,2", g);
  for (std::size_t p = 0; p < g.size(); ++p) {
    const auto x = g.point(p);
    EXPECT_NEAR(f[p], std::cos(2.0 * std::numbers::pi * (x[0] + 2 * x[1])), 1e-14);
  }
  EXPECT_THROW(parse_shape("cos:1", g), ConfigError);
}

TEST(Chain, TelegraphAndExplicit) {
  const auto t = parse_chain(json::parse(R"({"telegraph": {"sigma": 2.0, "rate": 0.5}})"));
  EXPECT_EQ(t.size(), 2u);
  EXPECT_NEAR(integrated_autocovariance(t), 8.0, 1e-12);
  const auto e = parse_chain(json::parse(R"({"states": [-1.0, 0.0, 1.0], "rates": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]})"));
  EXPECT_EQ(e.size(), 3u);
  EXPECT_THROW(parse_chain(json::parse(R"({"states": [-1.0, 1.0], "rates": [[0, 1]]})")), Error);
}

TEST(Config, ShippedConfigsLoad) {
  for (const char* name : {"standard_telegraph.json", "deterministic.json", "scalar_mean.json", "single_mode.json",
                           "three_state_2d.json"}) {
    EXPECT_NO_THROW(Experiment::build(ExperimentConfig::load(std::string(KINLIM_CONFIG_DIR) + "/" + name))) << name;
  }
}
