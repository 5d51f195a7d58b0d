#include "kinlim/kinetic_solver.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace kinlim {

namespace {
constexpr double kOverflowNorm = 1e12;
// Jumps this close to a step boundary (relative to the step) are applied at
// the boundary instead of producing a degenerate sub-interval.
constexpr double kBoundarySlack = 1e-12;
}  // namespace

void SolverConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) throw Error("epsilon must lie in (0, 1]");
  if (!(dt_factor > 0.0 && dt_factor <= 1.0)) throw Error("dt_factor must lie in (0, 1]");
  if (!(final_time > 0.0)) throw Error("final_time must be positive");
}

NoiseCursor::NoiseCursor(const NoiseModel& model, const NoisePath& path, double epsilon)
    : model_(&model), path_(&path), epsilon_(epsilon), state_(path.initial), field_(noise_field(model, path.initial)) {}

double NoiseCursor::next_jump_time() const {
  if (next_ >= path_->events.size()) return std::numeric_limits<double>::infinity();
  return path_->events[next_].time * epsilon_ * epsilon_;
}

double NoiseCursor::apply_next_jump() {
  const auto& e = path_->events.at(next_++);
  const int old = state_[e.chain];
  const auto& states = model_->chain(e.chain).states();
  const double delta = states[e.state] - states[old];
  const auto& eta = model_->mode(e.chain);
  for (std::size_t p = 0; p < field_.size(); ++p) field_[p] += delta * eta[p];
  state_[e.chain] = e.state;
  return e.time * epsilon_ * epsilon_;
}

KineticSolver::KineticSolver(VelocityModel model, SpectralPtr spectral)
    : model_(std::move(model)), spectral_(std::move(spectral)) {
  auto violations = validate(model_);
  if (!violations.empty()) throw Error("invalid velocity model: " + violations.front());
  if (model_.dim != spectral_->grid().dim) throw Error("velocity model and grid dimensions differ");
  hat_.resize(spectral_->spectral_size());
  multiplier_.resize(grid().size());
  rho_.resize(grid().size());
}

void KineticSolver::step_transport(KineticField& f, double tau, double epsilon) {
  if (tau == 0.0) return;
  const Spectral& sp = *spectral_;
  const int n = sp.grid().n;
  const int dim = sp.grid().dim;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    const auto& a = model_.velocities[i];
    const std::array<double, 2> shift{a[0] * tau / epsilon, a[1] * tau / epsilon};
    if (shift[0] == 0.0 && shift[1] == 0.0) continue;
    auto fi = f.velocity(i);
    sp.forward(fi, hat_);
    for (std::size_t s = 0; s < hat_.size(); ++s) {
      const auto k = sp.wavevector(s);
      double phase = 0.0;
      double damp = 1.0;
      for (int c = 0; c < dim; ++c) {
        if (std::abs(k[c]) == n / 2)
          damp *= std::cos(two_pi * (n / 2) * shift[c]);
        else
          phase -= two_pi * k[c] * shift[c];
      }
      hat_[s] *= damp * Complex(std::cos(phase), std::sin(phase));
    }
    sp.inverse(hat_, fi);
  }
}

void KineticSolver::step_collision(KineticField& f, double tau, double epsilon) const {
  if (tau == 0.0) return;
  const double decay = std::exp(-tau / (epsilon * epsilon));
  auto rho = average(model_, f);
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    auto fi = f.velocity(i);
    for (std::size_t p = 0; p < rho.size(); ++p) fi[p] = rho[p] + decay * (fi[p] - rho[p]);
  }
}

void KineticSolver::step_noise_multiplication(KineticField& f, double tau, double epsilon, const GridFunction& m) {
  if (m.size() != grid().size()) throw Error("noise field does not match grid");
  const double scale = tau / epsilon;
  bool trivial = true;
  for (std::size_t p = 0; p < m.size(); ++p) {
    multiplier_[p] = std::exp(m[p] * scale);
    trivial = trivial && m[p] == 0.0;
  }
  if (trivial) return;
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    auto fi = f.velocity(i);
    for (std::size_t p = 0; p < m.size(); ++p) fi[p] *= multiplier_[p];
  }
}

void KineticSolver::step_noise_multiplication(KineticField& f, double t0, double tau, double epsilon,
                                              const NoiseModel& noise, const NoisePath& path) {
  const double e2 = epsilon * epsilon;
  const double a = t0 / e2, b = (t0 + tau) / e2;
  if (b > path.horizon * (1.0 + kBoundarySlack)) throw Error("interval extends beyond the noise path");
  for (const auto& e : path.events) {
    if (e.time > a && e.time < b) {
      std::ostringstream os;
      os << "interval [" << t0 << ", " << t0 + tau << "] straddles a noise jump at macroscopic time " << e.time * e2;
      throw Error(os.str());
    }
    if (e.time >= b) break;
  }
  step_noise_multiplication(f, tau, epsilon, noise_field(noise, path.state_at(a)));
}

void KineticSolver::strang_step(KineticField& f, double h, double epsilon, const GridFunction& m) {
  step_collision(f, 0.5 * h, epsilon);
  step_transport(f, 0.5 * h, epsilon);
  step_noise_multiplication(f, h, epsilon, m);
  step_transport(f, 0.5 * h, epsilon);
  step_collision(f, 0.5 * h, epsilon);
}

double KineticSolver::advance(KineticField& f, NoiseCursor& cursor, double t, double dt, TrajectoryObserver* observer) {
  if (!(dt > 0.0)) throw Error("time step must be positive");
  const double end = t + dt;
  if (end > cursor.horizon() * (1.0 + kBoundarySlack)) throw Error("noise path too short for requested step");
  const double slack = kBoundarySlack * dt;
  double now = t;
  while (true) {
    double jump = cursor.next_jump_time();
    if (jump <= now + slack) {
      // Jump at (or rounding-close to) the current node.
      cursor.apply_next_jump();
      if (observer) observer->on_jump(now, f, cursor.state());
      continue;
    }
    double stop = jump < end - slack ? jump : end;
    strang_step(f, stop - now, cursor.epsilon(), cursor.field());
    now = stop;
    if (observer) observer->on_interval_end(now, f, cursor.state());
    if (stop == end) break;
  }
  return end;
}

std::vector<double> step_schedule(double dt, const std::vector<double>& output_times) {
  std::vector<double> nodes;
  double t = 0.0;
  for (double target : output_times) {
    if (!(target > t)) throw Error("output times must be strictly increasing and positive");
    const double len = target - t;
    const auto steps = std::max<long>(1, long(std::ceil(len / dt - 1e-9)));
    for (long k = 1; k < steps; ++k) nodes.push_back(t + len * double(k) / double(steps));
    nodes.push_back(target);
    t = target;
  }
  return nodes;
}

TrajectoryResult solve_trajectory(const KineticField& f0, const SolverConfig& config, KineticSolver& solver,
                                  const NoiseModel& noise, RngStream& rng, const TrajectoryOptions& options) {
  config.validate();
  const double horizon = config.final_time / (config.epsilon * config.epsilon);
  NoisePath path = simulate_path(noise, horizon, rng);
  return solve_trajectory(f0, config, solver, noise, path, options);
}

TrajectoryResult solve_trajectory(const KineticField& f0, const SolverConfig& config, KineticSolver& solver,
                                  const NoiseModel& noise, const NoisePath& path, const TrajectoryOptions& options) {
  config.validate();
  const auto& model = solver.model();
  if (!(f0.grid() == solver.grid()) || f0.nvel() != model.size()) throw Error("initial field does not match solver");
  for (double x : f0.values())
    if (!std::isfinite(x)) throw Error("initial field has non-finite values");

  std::vector<double> outputs = options.output_times;
  if (outputs.empty()) outputs.push_back(config.final_time);
  if (outputs.back() > config.final_time * (1.0 + 1e-12)) throw Error("output time beyond final time");

  TrajectoryResult result;
  KineticField f = f0;
  NoiseCursor cursor(noise, path, config.epsilon);
  result.initial_norm_squared = norm_squared(model, f);
  const double growth = 2.0 * noise.bound() / config.epsilon;

  auto* observer = options.observer;
  if (observer) observer->on_start(0.0, f, cursor.state());

  const auto nodes = step_schedule(config.time_step(), outputs);
  std::size_t next_output = 0;
  double t = 0.0;
  for (double node : nodes) {
    t = solver.advance(f, cursor, t, node - t, observer);
    t = node;
    ++result.steps;

    const double n2 = norm_squared(model, f);
    if (!std::isfinite(n2) || n2 > kOverflowNorm * kOverflowNorm) {
      std::ostringstream os;
      os << "kinetic field norm overflow at t = " << t << " (eps = " << config.epsilon << ")";
      throw TrajectoryFailure(os.str());
    }
    const double bound = std::exp(growth * t) * result.initial_norm_squared;
    ++result.gronwall_checks;
    if (bound > 0.0) result.gronwall_max_ratio = std::max(result.gronwall_max_ratio, n2 / bound);
    if (n2 > bound * (1.0 + options.gronwall_tolerance) + 1e-300) ++result.gronwall_violations;

    if (next_output < outputs.size() && node == outputs[next_output]) {
      result.times.push_back(node);
      result.norm_squared.push_back(n2);
      if (options.record_density) result.density.push_back(average(model, f));
      if (observer) observer->on_output(next_output, node, f, cursor.state());
      ++next_output;
    }
  }
  for (const auto& e : path.events)
    if (e.time * config.epsilon * config.epsilon <= t) ++result.jumps;
  return result;
}

}  // namespace kinlim
