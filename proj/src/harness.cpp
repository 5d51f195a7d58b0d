#include "kinlim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <fftw3.h>

#include "kinlim/version.hpp"

namespace kinlim {

namespace {

struct KineticPartial {
  EnsembleStats stats;
  FieldMean density;
  std::size_t done = 0;
  std::size_t failures = 0;
  std::size_t checks = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;
};

struct LimitPartial {
  EnsembleStats stats;
  FieldMean density;
  std::size_t done = 0;
};

void check_failures(std::size_t failures, std::size_t total, const std::string& what) {
  if (double(failures) > kMaxFailureFraction * double(total)) {
    std::ostringstream os;
    os << what << ": " << failures << " of " << total << " trajectories failed (limit "
       << kMaxFailureFraction * 100 << "%)";
    throw Error(os.str());
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void FieldMean::add(const std::vector<GridFunction>& fields) {
  if (sum.empty()) {
    sum = fields;
  } else {
    for (std::size_t t = 0; t < fields.size(); ++t)
      for (std::size_t p = 0; p < fields[t].size(); ++p) sum[t][p] += fields[t][p];
  }
  ++count;
}

void FieldMean::merge(const FieldMean& other) {
  if (other.count == 0) return;
  if (count == 0) {
    *this = other;
    return;
  }
  for (std::size_t t = 0; t < sum.size(); ++t)
    for (std::size_t p = 0; p < sum[t].size(); ++p) sum[t][p] += other.sum[t][p];
  count += other.count;
}

GridFunction FieldMean::mean(std::size_t time) const {
  if (count == 0) throw Error("mean of an empty field ensemble");
  GridFunction out = sum.at(time);
  for (double& x : out) x /= double(count);
  return out;
}

KineticEnsemble run_kinetic_ensemble(const Experiment& exp, std::size_t epsilon_index, std::size_t trajectories,
                                     std::size_t workers) {
  const auto& cfg = exp.config;
  const double eps = cfg.epsilons.at(epsilon_index);
  const SolverConfig solver_cfg{eps, cfg.dt_factor, cfg.final_time};
  const KineticField f0 = exp.initial_field();

  auto partials = run_blocks<KineticPartial>(trajectories, workers, [&](std::size_t, std::size_t begin,
                                                                        std::size_t end) {
    KineticPartial part;
    KineticSolver solver(exp.velocity(), exp.spectral);
    TrajectoryOptions opt;
    opt.output_times = cfg.output_times;
    for (std::size_t i = begin; i < end; ++i) {
      auto rng = trajectory_stream(cfg.seed, std::uint32_t(epsilon_index), std::uint32_t(i));
      TrajectoryResult res;
      try {
        res = solve_trajectory(f0, solver_cfg, solver, *exp.noise, rng, opt);
      } catch (const TrajectoryFailure&) {
        ++part.failures;
        continue;
      }
      for (std::size_t t = 0; t < res.times.size(); ++t) {
        for (const auto& fn : exp.functionals) part.stats.at(epsilon_index, fn.id(), t).push(fn.value(res.density[t]));
        const double n2 = res.norm_squared[t];
        part.stats.at(epsilon_index, kNorm2Key, t).push(n2);
        part.stats.at(epsilon_index, kNorm4Key, t).push(n2 * n2);
      }
      part.density.add(res.density);
      part.checks += res.gronwall_checks;
      part.violations += res.gronwall_violations;
      part.max_ratio = std::max(part.max_ratio, res.gronwall_max_ratio);
      ++part.done;
    }
    return part;
  });

  KineticEnsemble out;
  out.epsilon = eps;
  out.epsilon_index = epsilon_index;
  out.initial_norm_squared = norm_squared(exp.velocity(), f0);
  std::size_t failures = 0;
  for (const auto& p : partials) {
    out.stats.merge(p.stats);
    out.density.merge(p.density);
    out.trajectories += p.done;
    failures += p.failures;
    out.gronwall_checks += p.checks;
    out.gronwall_violations += p.violations;
    out.gronwall_max_ratio = std::max(out.gronwall_max_ratio, p.max_ratio);
  }
  out.stats.failures = failures;
  check_failures(failures, trajectories, "kinetic ensemble");
  return out;
}

LimitEnsemble run_limit_ensemble(const Experiment& exp, std::size_t trajectories, std::size_t workers) {
  const auto& cfg = exp.config;
  const auto coefficients = LimitCoefficients::from_models(exp.velocity(), *exp.noise);
  const double dt = cfg.final_time / double(cfg.spde_steps);

  auto partials = run_blocks<LimitPartial>(trajectories, workers, [&](std::size_t, std::size_t begin,
                                                                      std::size_t end) {
    LimitPartial part;
    for (std::size_t i = begin; i < end; ++i) {
      auto rng = trajectory_stream(cfg.seed, kLimitEnsemble, std::uint32_t(i));
      auto res = solve_spde_trajectory(*exp.spectral, exp.rho0, coefficients, dt, cfg.output_times, rng);
      for (std::size_t t = 0; t < res.times.size(); ++t)
        for (const auto& fn : exp.functionals) part.stats.at(0, fn.id(), t).push(fn.value(res.density[t]));
      part.density.add(res.density);
      ++part.done;
    }
    return part;
  });

  LimitEnsemble out;
  for (const auto& p : partials) {
    out.stats.merge(p.stats);
    out.density.merge(p.density);
    out.trajectories += p.done;
  }
  return out;
}

MomentCheck uniform_moment_check(const std::vector<KineticEnsemble>& ensembles, const std::vector<double>& times,
                                 double threshold) {
  if (ensembles.empty()) throw Error("moment check needs at least one ensemble");
  MomentCheck out;
  const double n0 = ensembles.front().initial_norm_squared;
  out.bound_second = threshold * n0;
  out.bound_fourth = out.bound_second * out.bound_second;
  out.passed = true;
  std::ostringstream os;
  for (const auto& e : ensembles) {
    double sup_e = 0.0;
    for (std::size_t t = 0; t < times.size(); ++t) {
      const auto* s2 = e.stats.find(e.epsilon_index, kNorm2Key, t);
      const auto* s4 = e.stats.find(e.epsilon_index, kNorm4Key, t);
      if (!s2 || !s4) throw Error("moment statistics missing");
      sup_e = std::max(sup_e, s2->mean());
      out.sup_second = std::max(out.sup_second, s2->mean());
      out.sup_fourth = std::max(out.sup_fourth, s4->mean());
      if (out.passed && (s2->mean() > out.bound_second || s4->mean() > out.bound_fourth)) {
        out.passed = false;
        os << "moment bound exceeded at eps = " << e.epsilon << ", t = " << times[t];
      }
    }
    out.per_epsilon.push_back(sup_e);
  }
  out.message = out.passed ? "bounded" : os.str();
  return out;
}

ConvergenceReport run_ensemble(const Experiment& exp, std::size_t workers) {
  const auto& cfg = exp.config;
  ConvergenceReport rep;
  for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
    rep.kinetic.push_back(run_kinetic_ensemble(exp, e, cfg.ensemble_size, workers));
    rep.failures += rep.kinetic.back().stats.failures;
  }
  rep.limit = run_limit_ensemble(exp, cfg.spde_ensemble_size, workers);

  const std::size_t last = cfg.output_times.size() - 1;
  EnsembleStats kin;
  for (const auto& k : rep.kinetic) kin.merge(k.stats);
  std::vector<std::string> ids;
  for (const auto& fn : exp.functionals) ids.push_back(fn.id());
  if (cfg.epsilons.size() >= 2 && !ids.empty()) rep.table = weak_error_table(kin, rep.limit.stats, cfg.epsilons, ids, last);

  const GridFunction lim_mean = rep.limit.density.mean(last);
  for (const auto& k : rep.kinetic)
    rep.sobolev.push_back(sobolev_distance(*exp.spectral, k.density.mean(last), lim_mean, cfg.sobolev_eta));
  rep.moments = uniform_moment_check(rep.kinetic, cfg.output_times, cfg.moment_threshold);
  return rep;
}

NoiseStatsRow estimate_autocovariance(const ChainSpec& chain, std::size_t mode, double tau, std::size_t paths,
                                      std::uint64_t seed) {
  if (!(tau > 0.0)) throw Error("autocovariance horizon must be positive");
  NoiseStatsRow row;
  row.mode = mode;
  row.c_analytic = integrated_autocovariance(chain);
  std::vector<ChainSpec> chains{chain};
  RunningStats stats;
  for (std::size_t i = 0; i < paths; ++i) {
    auto rng = trajectory_stream(seed, std::uint32_t(mode), std::uint32_t(i));
    auto n0 = sample_stationary(chains, rng);
    auto path = simulate_path(chains, n0, tau, rng);
    double x = 0.0, t = 0.0;
    int state = n0[0];
    for (const auto& e : path.events) {
      x += chain.states()[state] * (e.time - t);
      t = e.time;
      state = e.state;
    }
    x += chain.states()[state] * (tau - t);
    stats.push(x * x / tau);
  }
  row.c_empirical = stats.mean();
  row.stderr_of_mean = stats.stderr_of_mean();
  return row;
}

MartingaleEnsemble run_martingale_ensemble(const Experiment& exp, double epsilon, std::size_t trajectories,
                                           const std::vector<double>& checkpoints, std::size_t workers) {
  const auto& cfg = exp.config;
  if (checkpoints.empty() || checkpoints.back() > cfg.final_time) throw Error("checkpoints must lie in (0, T]");
  std::vector<PerturbedTestFunction> bundles;
  for (const auto& fn : exp.functionals) bundles.emplace_back(fn, exp.velocity(), exp.noise);
  std::vector<const PerturbedTestFunction*> ptrs;
  for (const auto& b : bundles) ptrs.push_back(&b);
  const std::size_t nf = bundles.size(), nt = checkpoints.size();
  const SolverConfig solver_cfg{epsilon, cfg.dt_factor, checkpoints.back()};
  const KineticField f0 = exp.initial_field();

  struct Partial {
    std::vector<std::vector<std::vector<double>>> residual;  // [functional][traj][time]
    std::vector<std::vector<RunningStats>> gap;
    std::size_t failures = 0, checks = 0, violations = 0;
  };
  auto partials = run_blocks<Partial>(trajectories, workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    Partial part;
    part.residual.assign(nf, {});
    part.gap.assign(nf, std::vector<RunningStats>(nt));
    KineticSolver solver(exp.velocity(), exp.spectral);
    for (std::size_t i = begin; i < end; ++i) {
      MartingaleTracker tracker(ptrs, epsilon);
      TrajectoryOptions opt;
      opt.output_times = checkpoints;
      opt.record_density = false;
      opt.observer = &tracker;
      auto rng = trajectory_stream(cfg.seed, 0x4D00u, std::uint32_t(i));
      TrajectoryResult res;
      try {
        res = solve_trajectory(f0, solver_cfg, solver, *exp.noise, rng, opt);
      } catch (const TrajectoryFailure&) {
        ++part.failures;
        continue;
      }
      part.checks += res.gronwall_checks;
      part.violations += res.gronwall_violations;
      for (std::size_t k = 0; k < nf; ++k) {
        part.residual[k].push_back(tracker.residuals()[k]);
        for (std::size_t t = 0; t < nt; ++t) {
          const double m = tracker.residuals()[k][t];
          part.gap[k][t].push(m * m - tracker.brackets()[k][t]);
        }
      }
    }
    return part;
  });

  MartingaleEnsemble out;
  out.times = checkpoints;
  std::vector<std::vector<std::vector<double>>> samples(nf);
  out.bracket_gap.assign(nf, std::vector<RunningStats>(nt));
  std::size_t failures = 0;
  for (const auto& p : partials) {
    for (std::size_t k = 0; k < nf; ++k) {
      samples[k].insert(samples[k].end(), p.residual[k].begin(), p.residual[k].end());
      for (std::size_t t = 0; t < nt; ++t) out.bracket_gap[k][t].merge(p.gap[k][t]);
    }
    failures += p.failures;
    out.gronwall_checks += p.checks;
    out.gronwall_violations += p.violations;
  }
  check_failures(failures, trajectories, "martingale ensemble");
  for (std::size_t k = 0; k < nf; ++k) out.checkpoints.push_back(martingale_residual(samples[k], checkpoints));
  return out;
}

KineticField random_smooth_state(const Grid& grid, std::size_t nvel, RngStream& rng, double offset) {
  std::normal_distribution<double> normal;
  KineticField f(grid, nvel, offset);
  const int kmax = 3;
  for (std::size_t i = 0; i < nvel; ++i) {
    auto fi = f.velocity(i);
    for (int k0 = 0; k0 <= kmax; ++k0)
      for (int k1 = (grid.dim == 2 ? -kmax : 0); k1 <= (grid.dim == 2 ? kmax : 0); ++k1)
        for (Trig t : {Trig::Cos, Trig::Sin}) {
          const double a = normal(rng) / (1.0 + k0 * k0 + k1 * k1);
          const auto mode = fourier_mode(grid, t, {k0, k1});
          for (std::size_t p = 0; p < fi.size(); ++p) fi[p] += a * mode[p];
        }
  }
  return f;
}

std::vector<GeneratorRow> diagnose_generator(const Experiment& exp, std::size_t states, std::uint64_t seed) {
  const auto& cfg = exp.config;
  std::vector<GeneratorRow> rows;
  for (const auto& fn : exp.functionals) {
    PerturbedTestFunction bundle(fn, exp.velocity(), exp.noise);
    // residual[e][s]
    std::vector<std::vector<double>> residual(cfg.epsilons.size());
    for (std::size_t s = 0; s < states; ++s) {
      auto rng = trajectory_stream(seed, 0x6E00u, std::uint32_t(s));
      const KineticField f = random_smooth_state(exp.grid(), exp.velocity().size(), rng);
      const NoiseState n = sample_stationary(*exp.noise, rng);
      const auto terms = bundle.generator_terms(f, n);
      const double lim = bundle.generator_limit(average(exp.velocity(), f));
      const double scale = 1.0 + norm_squared(exp.velocity(), f);
      for (std::size_t e = 0; e < cfg.epsilons.size(); ++e)
        residual[e].push_back(std::abs(terms.total(cfg.epsilons[e]) - lim) / scale);
    }
    for (std::size_t e = 0; e < cfg.epsilons.size(); ++e) {
      RunningStats st;
      for (double r : residual[e]) st.push(r);
      GeneratorRow row{cfg.epsilons[e], fn.id(), st.mean(), st.stderr_of_mean(),
                       std::numeric_limits<double>::quiet_NaN()};
      if (e > 0) {
        std::vector<double> ratios;
        for (std::size_t s = 0; s < states; ++s)
          if (residual[e][s] > 0.0) ratios.push_back(residual[e - 1][s] / residual[e][s]);
        row.scaling_ratio = median(ratios);
      }
      rows.push_back(row);
    }
  }
  return rows;
}

std::string format_number(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
    out << '\n';
  }
}

void write_manifest(const std::filesystem::path& dir, const Experiment& exp, const std::string& command,
                    std::size_t workers, const nlohmann::json& extra) {
  std::filesystem::create_directories(dir);
  nlohmann::json m;
  m["command"] = command;
  m["config"] = exp.config.source;
  m["seed"] = exp.config.seed;
  m["workers"] = workers;
  m["versions"]["kinlim"] = kVersion;
  m["versions"]["fftw"] = std::string(fftw_version);
  m["versions"]["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                           std::to_string(EIGEN_MINOR_VERSION);
  m["versions"]["compiler"] = std::string(__VERSION__);
  for (const auto& [k, v] : extra.items()) m[k] = v;
  std::ofstream out(dir / "run_manifest.json");
  if (!out) throw Error("cannot write manifest in " + dir.string());
  out << m.dump(2) << '\n';
}

}  // namespace kinlim
