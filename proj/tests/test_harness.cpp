#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "kinlim/harness.hpp"

using namespace kinlim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

Experiment small(bool noisy, std::size_t trajectories = 100) {
  auto j = json::parse(R"({
    "grid_size": 16,
    "velocity_model": {"velocities": [-1.0, 1.0], "weights": [0.5, 0.5]},
    "initial_density": {"terms": [{"shape": "const"}, {"shape": "cos:1", "amplitude": 0.5}]},
    "epsilons": [0.2],
    "final_time": 0.02,
    "output_times": [0.01, 0.02],
    "spde_steps": 64,
    "functionals": [{"id": "lin", "kind": "linear", "weight": "cos:1"},
                    {"id": "quad", "kind": "quadratic", "weight": "cos:1"}],
    "seed": 99
  })");
  j["ensemble_size"] = trajectories;
  j["spde_ensemble_size"] = trajectories;
  if (noisy)
    j["noise_model"] = json::parse(
        R"({"modes": [{"shape": "cos:1", "chain": {"telegraph": {"sigma": 1.0, "rate": 1.0}}},
                      {"shape": "sin:2", "chain": {"states": [-1, 0, 1], "rates": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]}}]})");
  return Experiment::build(ExperimentConfig::from_json(j));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const KineticEnsemble& e, const fs::path& path) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& [key, s] : e.stats.entries)
    rows.push_back({key.functional, std::to_string(key.time_index), format_number(s.mean()),
                    format_number(s.variance()), std::to_string(s.count())});
  for (std::size_t t = 0; t < e.density.sum.size(); ++t)
    for (double v : e.density.mean(t)) rows.push_back({"rho", std::to_string(t), format_number(v), "", ""});
  write_csv(path, {"key", "t", "mean", "var", "n"}, rows);
}

}  // namespace

TEST(Harness, WorkerCountDoesNotChangeOutputBytes) {
  const auto exp = small(true, 150);
  const fs::path dir = fs::temp_directory_path() / "kinlim_det";
  dump(run_kinetic_ensemble(exp, 0, 150, 1), dir / "w1.csv");
  dump(run_kinetic_ensemble(exp, 0, 150, 4), dir / "w4.csv");
  dump(run_kinetic_ensemble(exp, 0, 150, 1), dir / "again.csv");
  const auto a = slurp(dir / "w1.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "w4.csv"));
  EXPECT_EQ(a, slurp(dir / "again.csv"));

  const auto l1 = run_limit_ensemble(exp, 70, 1);
  const auto l3 = run_limit_ensemble(exp, 70, 3);
  for (const auto& [key, s] : l1.stats.entries) {
    const auto* o = l3.stats.find(key.epsilon_index, key.functional, key.time_index);
    ASSERT_NE(o, nullptr);
    EXPECT_EQ(s.mean(), o->mean());
    EXPECT_EQ(s.m2(), o->m2());
  }
}

TEST(Harness, SeedChangesResults) {
  auto exp = small(true, 40);
  const double a = run_kinetic_ensemble(exp, 0, 40, 1).stats.find(0, "lin", 1)->mean();
  exp.config.seed += 1;
  const double b = run_kinetic_ensemble(exp, 0, 40, 1).stats.find(0, "lin", 1)->mean();
  EXPECT_NE(a, b);
}

TEST(Harness, ZeroNoiseHasZeroVarianceAndDissipates) {
  const auto exp = small(false, 40);
  const auto e = run_kinetic_ensemble(exp, 0, 40, 2);
  EXPECT_EQ(e.trajectories, 40u);
  EXPECT_EQ(e.stats.failures, 0u);
  for (const auto& [key, s] : e.stats.entries) {
    EXPECT_EQ(s.count(), 40u);
    EXPECT_NEAR(s.variance(), 0.0, 1e-24) << key.functional;
  }
  for (std::size_t t = 0; t < 2; ++t)
    EXPECT_LE(e.stats.find(0, kNorm2Key, t)->mean(), e.initial_norm_squared * (1 + 1e-12));
  EXPECT_EQ(e.gronwall_violations, 0u);
  EXPECT_GT(e.gronwall_checks, 0u);
}

TEST(Harness, RunBlocksPropagatesExceptions) {
  EXPECT_THROW(run_blocks<int>(200, 3,
                               [](std::size_t b, std::size_t, std::size_t) -> int {
                                 if (b == 4) throw Error("boom");
                                 return int(b);
                               }),
               Error);
  const auto out = run_blocks<std::size_t>(100, 2, [](std::size_t, std::size_t begin, std::size_t end) {
    return end - begin;
  });
  ASSERT_EQ(out.size(), 4u);
  EXPECT_EQ(out[3], 100 - 3 * kBlockSize);
}

TEST(MomentCheck, BoundAndOffendingPoint) {
  auto make = [](double eps, std::size_t idx, double second) {
    KineticEnsemble e;
    e.epsilon = eps;
    e.epsilon_index = idx;
    e.initial_norm_squared = 1.0;
    for (std::size_t t = 0; t < 2; ++t) {
      e.stats.at(idx, kNorm2Key, t).push(t == 1 ? second : 1.0);
      e.stats.at(idx, kNorm4Key, t).push(1.0);
    }
    return e;
  };
  auto ok = uniform_moment_check({make(0.2, 0, 2.0), make(0.1, 1, 3.0)}, {0.5, 1.0}, 4.0);
  EXPECT_TRUE(ok.passed);
  EXPECT_DOUBLE_EQ(ok.sup_second, 3.0);
  EXPECT_DOUBLE_EQ(ok.bound_fourth, 16.0);
  EXPECT_EQ(ok.per_epsilon, (std::vector<double>{2.0, 3.0}));

  auto bad = uniform_moment_check({make(0.2, 0, 2.0), make(0.1, 1, 5.0)}, {0.5, 1.0}, 4.0);
  EXPECT_FALSE(bad.passed);
  EXPECT_NE(bad.message.find("eps = 0.1"), std::string::npos) << bad.message;
  EXPECT_NE(bad.message.find("t = 1"), std::string::npos) << bad.message;
}

TEST(NoiseStats, ThreeStateChainMatchesPoissonValue) {
  const auto chain = parse_chain(json::parse(R"({"states": [-1, 0, 1], "rates": [[0, 1, 0], [1, 0, 1], [0, 1, 0]]})"));
  const double c = integrated_autocovariance(chain);
  const auto r = estimate_autocovariance(chain, 0, 100.0, 2000, 5);
  EXPECT_DOUBLE_EQ(r.c_analytic, c);
  EXPECT_LT(std::abs(r.c_empirical - c), 4.0 * r.stderr_of_mean + 0.05 * c);
}

TEST(Manifest, RecordsSeedWorkersAndExtras) {
  const auto exp = small(true, 10);
  const fs::path dir = fs::temp_directory_path() / "kinlim_manifest";
  write_manifest(dir, exp, "unit", 3, {{"failures", 0}});
  const auto m = json::parse(slurp(dir / "run_manifest.json"));
  EXPECT_EQ(m.at("seed").get<std::uint64_t>(), 99u);
  EXPECT_EQ(m.at("workers").get<int>(), 3);
  EXPECT_EQ(m.at("failures").get<int>(), 0);
  EXPECT_EQ(m.at("config").at("grid_size").get<int>(), 16);
  EXPECT_TRUE(m.at("versions").contains("fftw"));
}

TEST(Csv, HeaderAndPrecision) {
  const fs::path p = fs::temp_directory_path() / "kinlim_csv" / "t.csv";
  write_csv(p, {"a", "b"}, {{format_number(0.1), "x"}});
  EXPECT_EQ(slurp(p), "a,b\n0.10000000000000001,x\n");
}

TEST(Martingale, MeanAndBracketGapVanish) {
  const auto exp = small(true, 400);
  const std::vector<double> checkpoints{0.01, 0.02};
  const auto ens = run_martingale_ensemble(exp, 0.2, 400, checkpoints, 2);
  ASSERT_EQ(ens.checkpoints.size(), exp.functionals.size());
  EXPECT_EQ(ens.gronwall_violations, 0u);
  for (std::size_t k = 0; k < ens.checkpoints.size(); ++k)
    for (std::size_t t = 0; t < checkpoints.size(); ++t) {
      const auto& c = ens.checkpoints[k][t];
      EXPECT_EQ(c.count, 400u);
      EXPECT_LE(std::abs(c.mean), 3.0 * c.stderr_of_mean) << k << " " << t;
      const auto& gap = ens.bracket_gap[k][t];
      EXPECT_LE(std::abs(gap.mean()), 3.0 * gap.stderr_of_mean()) << k << " " << t;
    }
}
