// Command-line front end: every subcommand reads one experiment file and
// writes CSV tables plus run_manifest.json into the output directory.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <thread>

#include "kinlim/harness.hpp"

namespace fs = std::filesystem;
using namespace kinlim;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitCheck = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Experiment JSON file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Override the base seed");
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--out", c.out, "Output directory (default: from config)");
}

Experiment load(const Common& c) {
  auto cfg = ExperimentConfig::load(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_directory = c.out;
  return Experiment::build(std::move(cfg));
}

std::string num(double x) { return format_number(x); }

std::vector<std::vector<std::string>> timeseries_rows(const EnsembleStats& stats, std::size_t eps_index, double eps,
                                                      const std::vector<std::string>& keys,
                                                      const std::vector<double>& times) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t t = 0; t < times.size(); ++t)
    for (const auto& k : keys) {
      const auto* s = stats.find(eps_index, k, t);
      if (!s) continue;
      rows.push_back({num(eps), num(times[t]), k, num(s->mean()), num(s->count() > 1 ? s->stderr_of_mean() : 0.0),
                      std::to_string(s->count())});
    }
  return rows;
}

std::vector<std::vector<std::string>> density_rows(const FieldMean& fm, const Grid& grid, double eps,
                                                   const std::vector<double>& times) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t t = 0; t < times.size(); ++t) {
    const auto mean = fm.mean(t);
    for (std::size_t p = 0; p < grid.size(); ++p) {
      const auto x = grid.point(p);
      std::vector<std::string> row{num(eps), num(times[t]), num(x[0])};
      if (grid.dim == 2) row.push_back(num(x[1]));
      row.push_back(num(mean[p]));
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<std::string> density_header(const Grid& grid) {
  std::vector<std::string> h{"epsilon", "time", "x"};
  if (grid.dim == 2) h.push_back("y");
  h.push_back("rho_mean");
  return h;
}

std::vector<std::string> functional_ids(const Experiment& exp) {
  std::vector<std::string> ids;
  for (const auto& f : exp.functionals) ids.push_back(f.id());
  return ids;
}

int cmd_coeffs(const Common& c) {
  const auto exp = load(c);
  const fs::path dir = exp.config.output_directory;
  const auto k = diffusion_matrix(exp.velocity());
  std::cout << "K =";
  for (int p = 0; p < exp.grid().dim; ++p)
    for (int q = 0; q < exp.grid().dim; ++q) std::cout << ' ' << k[p][q];
  std::cout << "\n";
  std::vector<std::vector<std::string>> modes;
  for (std::size_t j = 0; j < exp.noise->num_modes(); ++j) {
    std::cout << "c_" << j << " = " << exp.noise->autocovariance(j) << "\n";
    modes.push_back({std::to_string(j), num(exp.noise->autocovariance(j)), num(max_abs(exp.noise->mode(j))),
                     num(exp.noise->chain(j).max_abs_state())});
  }
  std::cout << "C_* = " << exp.noise->bound() << "\n";
  write_csv(dir / "modes.csv", {"j", "c", "eta_sup", "state_sup"}, modes);

  const auto trace = trace_field(*exp.noise);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t p = 0; p < trace.size(); ++p) {
    const auto x = exp.grid().point(p);
    std::vector<std::string> row{num(x[0])};
    if (exp.grid().dim == 2) row.push_back(num(x[1]));
    row.push_back(num(trace[p]));
    rows.push_back(std::move(row));
  }
  std::vector<std::string> header{"x"};
  if (exp.grid().dim == 2) header.push_back("y");
  header.push_back("F");
  write_csv(dir / "trace.csv", header, rows);

  nlohmann::json extra;
  extra["diffusion_matrix"] = {{k[0][0], k[0][1]}, {k[1][0], k[1][1]}};
  extra["bound_c_star"] = exp.noise->bound();
  const auto lc = LimitCoefficients::from_models(exp.velocity(), *exp.noise);
  extra["drift_consistency"] = drift_consistency(lc);
  write_manifest(dir, exp, "coeffs", c.workers, extra);
  return 0;
}

int cmd_noise_stats(const Common& c, double tau, std::size_t paths) {
  const auto exp = load(c);
  const fs::path dir = exp.config.output_directory;
  std::vector<std::vector<std::string>> rows;
  bool ok = true;
  for (std::size_t j = 0; j < exp.noise->num_modes(); ++j) {
    const auto r = estimate_autocovariance(exp.noise->chain(j), j, tau, paths, exp.config.seed);
    rows.push_back({std::to_string(j), num(r.c_analytic), num(r.c_empirical), num(r.stderr_of_mean)});
    std::cout << "mode " << j << ": c = " << r.c_analytic << ", empirical " << r.c_empirical << " +- "
              << r.stderr_of_mean << "\n";
    // The finite-horizon estimator is biased low by O(1/τ); report, do not fail on it.
    ok = ok && std::isfinite(r.c_empirical);
  }
  write_csv(dir / "noise_stats.csv", {"j", "c_analytic", "c_empirical", "stderr"}, rows);
  write_manifest(dir, exp, "noise-stats", c.workers, {{"tau", tau}, {"paths", paths}});
  return ok ? 0 : kExitCheck;
}

int cmd_simulate_kinetic(const Common& c, std::optional<double> epsilon, std::optional<std::size_t> trajectories) {
  const auto exp = load(c);
  const auto& cfg = exp.config;
  const fs::path dir = cfg.output_directory;
  std::size_t index = 0;
  if (epsilon) {
    auto it = std::find(cfg.epsilons.begin(), cfg.epsilons.end(), *epsilon);
    if (it == cfg.epsilons.end()) throw ConfigError("--epsilon must be one of the configured epsilons");
    index = std::size_t(it - cfg.epsilons.begin());
  }
  const auto ens = run_kinetic_ensemble(exp, index, trajectories.value_or(cfg.ensemble_size), c.workers);
  auto keys = functional_ids(exp);
  keys.push_back(kNorm2Key);
  keys.push_back(kNorm4Key);
  write_csv(dir / "kinetic_timeseries.csv", {"epsilon", "time", "observable", "mean", "stderr", "count"},
            timeseries_rows(ens.stats, index, ens.epsilon, keys, cfg.output_times));
  write_csv(dir / "kinetic_density_mean.csv", density_header(exp.grid()),
            density_rows(ens.density, exp.grid(), ens.epsilon, cfg.output_times));
  write_manifest(dir, exp, "simulate-kinetic", c.workers,
                 {{"epsilon", ens.epsilon},
                  {"trajectories", ens.trajectories},
                  {"failures", ens.stats.failures},
                  {"gronwall_checks", ens.gronwall_checks},
                  {"gronwall_violations", ens.gronwall_violations}});
  std::cout << "eps = " << ens.epsilon << ": " << ens.trajectories << " trajectories, " << ens.stats.failures
            << " failures, " << ens.gronwall_violations << " energy-bound violations\n";
  return ens.gronwall_violations == 0 ? 0 : kExitCheck;
}

int cmd_simulate_spde(const Common& c, std::optional<std::size_t> trajectories) {
  const auto exp = load(c);
  const auto& cfg = exp.config;
  const fs::path dir = cfg.output_directory;
  const auto ens = run_limit_ensemble(exp, trajectories.value_or(cfg.spde_ensemble_size), c.workers);
  write_csv(dir / "spde_timeseries.csv", {"epsilon", "time", "observable", "mean", "stderr", "count"},
            timeseries_rows(ens.stats, 0, 0.0, functional_ids(exp), cfg.output_times));
  write_csv(dir / "spde_density_mean.csv", density_header(exp.grid()),
            density_rows(ens.density, exp.grid(), 0.0, cfg.output_times));
  const auto lc = LimitCoefficients::from_models(exp.velocity(), *exp.noise);
  write_manifest(dir, exp, "simulate-spde", c.workers,
                 {{"trajectories", ens.trajectories}, {"drift_consistency", drift_consistency(lc)}});
  std::cout << ens.trajectories << " limit trajectories\n";
  return 0;
}

int cmd_converge(const Common& c, bool require_convergence) {
  const auto exp = load(c);
  const auto& cfg = exp.config;
  cfg.require_ensembles(100);
  const fs::path dir = cfg.output_directory;
  const auto rep = run_ensemble(exp, c.workers);

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : rep.table.rows)
    rows.push_back({r.functional, num(r.epsilon), num(r.kinetic_mean), num(r.limit_mean), num(r.error), num(r.ci),
                    num(r.ratio)});
  write_csv(dir / "weak_error.csv", {"functional", "epsilon", "kinetic_mean", "limit_mean", "error", "ci", "ratio"},
            rows);
  std::vector<std::vector<std::string>> sob;
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) sob.push_back({num(cfg.epsilons[e]), num(rep.sobolev[e])});
  write_csv(dir / "sobolev_distance.csv", {"epsilon", "distance"}, sob);
  std::vector<std::vector<std::string>> mom;
  for (const auto& k : rep.kinetic)
    for (std::size_t t = 0; t < cfg.output_times.size(); ++t) {
      const auto* s2 = k.stats.find(k.epsilon_index, kNorm2Key, t);
      const auto* s4 = k.stats.find(k.epsilon_index, kNorm4Key, t);
      mom.push_back({num(k.epsilon), num(cfg.output_times[t]), num(s2->mean()), num(s2->stderr_of_mean()),
                     num(s4->mean()), num(s4->stderr_of_mean())});
    }
  write_csv(dir / "moments.csv", {"epsilon", "time", "norm2_mean", "norm2_stderr", "norm4_mean", "norm4_stderr"},
            mom);

  std::size_t violations = 0;
  nlohmann::json failures = nlohmann::json::object();
  for (const auto& k : rep.kinetic) {
    violations += k.gronwall_violations;
    failures[format_number(k.epsilon)] = k.stats.failures;
  }
  nlohmann::json verdicts = rep.table.verdicts;
  write_manifest(dir, exp, "converge", c.workers,
                 {{"failures", failures},
                  {"verdicts", verdicts},
                  {"moment_check", rep.moments.message},
                  {"gronwall_violations", violations}});

  for (const auto& r : rep.table.rows)
    std::cout << r.functional << " eps=" << r.epsilon << " error=" << r.error << " ci=" << r.ci << "\n";
  bool converged = true;
  for (const auto& [id, v] : rep.table.verdicts) {
    std::cout << id << ": " << v << "\n";
    converged = converged && v == kVerdictConsistent;
  }
  std::cout << "moments: " << rep.moments.message << "\n";
  const bool ok = rep.moments.passed && violations == 0 && (!require_convergence || converged);
  return ok ? 0 : kExitCheck;
}

int cmd_diagnose(const Common& c, std::size_t states, double min_ratio, double max_ratio) {
  const auto exp = load(c);
  const fs::path dir = exp.config.output_directory;
  const auto rows = diagnose_generator(exp, states, exp.config.seed);
  std::vector<std::vector<std::string>> out;
  bool ok = true;
  for (const auto& r : rows) {
    out.push_back({num(r.epsilon), r.functional, num(r.residual_mean), num(r.residual_stderr), num(r.scaling_ratio)});
    if (!std::isnan(r.scaling_ratio)) ok = ok && r.scaling_ratio >= min_ratio && r.scaling_ratio <= max_ratio;
  }
  write_csv(dir / "generator_residual.csv",
            {"epsilon", "functional_id", "residual_mean", "residual_stderr", "scaling_ratio"}, out);
  write_manifest(dir, exp, "diagnose-generator", c.workers, {{"states", states}});
  return ok ? 0 : kExitCheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion-limit experiments for randomly forced kinetic equations"};
  app.require_subcommand(1);
  Common common;

  auto* coeffs = app.add_subcommand("coeffs", "Print K, c_j and write the trace F");
  add_common(coeffs, common);

  double tau = 50.0;
  std::size_t paths = 1000;
  auto* noise = app.add_subcommand("noise-stats", "Analytic vs empirical integrated autocovariance");
  add_common(noise, common);
  noise->add_option("--tau", tau, "Microscopic path length")->check(CLI::PositiveNumber);
  noise->add_option("--paths", paths, "Number of stationary paths")->check(CLI::PositiveNumber);

  std::optional<double> epsilon;
  std::optional<std::size_t> trajectories;
  auto* kin = app.add_subcommand("simulate-kinetic", "Kinetic ensemble at one epsilon");
  add_common(kin, common);
  kin->add_option("--epsilon", epsilon, "One of the configured epsilons (default: first)");
  kin->add_option("--trajectories", trajectories, "Override ensemble_size");

  auto* spde = app.add_subcommand("simulate-spde", "Ensemble of the limit equation");
  add_common(spde, common);
  spde->add_option("--trajectories", trajectories, "Override spde_ensemble_size");

  bool require_convergence = false;
  auto* conv = app.add_subcommand("converge", "Epsilon sweep with weak-error table");
  add_common(conv, common);
  conv->add_flag("--require-convergence", require_convergence, "Exit 3 unless every verdict is consistent");

  std::size_t states = 200;
  double min_ratio = 1.5, max_ratio = 2.5;
  auto* diag = app.add_subcommand("diagnose-generator", "Generator residual scaling over random states");
  add_common(diag, common);
  diag->add_option("--states", states, "Random states per functional")->check(CLI::PositiveNumber);
  diag->add_option("--min-ratio", min_ratio, "Lower bound on the median scaling ratio");
  diag->add_option("--max-ratio", max_ratio, "Upper bound on the median scaling ratio");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*coeffs) return cmd_coeffs(common);
    if (*noise) return cmd_noise_stats(common, tau, paths);
    if (*kin) return cmd_simulate_kinetic(common, epsilon, trajectories);
    if (*spde) return cmd_simulate_spde(common, trajectories);
    if (*conv) return cmd_converge(common, require_convergence);
    if (*diag) return cmd_diagnose(common, states, min_ratio, max_ratio);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
