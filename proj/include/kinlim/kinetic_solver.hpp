#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "kinlim/grid.hpp"
#include "kinlim/markov_noise.hpp"
#include "kinlim/velocity_space.hpp"

namespace kinlim {

struct SolverConfig {
  double epsilon = 0.1;
  /// Macroscopic step is dt_factor * epsilon².
  double dt_factor = 0.1;
  double final_time = 1.0;

  double time_step() const { return dt_factor * epsilon * epsilon; }
  void validate() const;
};

/// Raised when a trajectory leaves the a priori bounded regime.
class TrajectoryFailure : public Error {
 public:
  using Error::Error;
};

/// Walks a NoisePath in macroscopic time t = ε² τ, keeping the current noise
/// state and field m(t) up to date.
class NoiseCursor {
 public:
  NoiseCursor(const NoiseModel& model, const NoisePath& path, double epsilon);

  double epsilon() const { return epsilon_; }
  const NoiseState& state() const { return state_; }
  const GridFunction& field() const { return field_; }
  /// Macroscopic time of the next jump, +inf when none remain.
  double next_jump_time() const;
  /// Macroscopic end of the simulated path.
  double horizon() const { return path_->horizon * epsilon_ * epsilon_; }
  /// Applies the next jump; returns its macroscopic time.
  double apply_next_jump();

 private:
  const NoiseModel* model_;
  const NoisePath* path_;
  double epsilon_;
  std::size_t next_ = 0;
  NoiseState state_;
  GridFunction field_;
};

/// Hooks called while a trajectory is advanced. Between an on_start/on_jump
/// and the following on_interval_end, the noise state is constant.
class TrajectoryObserver {
 public:
  virtual ~TrajectoryObserver() = default;
  virtual void on_start(double /*t*/, const KineticField& /*f*/, const NoiseState& /*n*/) {}
  /// End of a constant-noise sub-interval; `n` is the state that held on it.
  virtual void on_interval_end(double /*t*/, const KineticField& /*f*/, const NoiseState& /*n*/) {}
  /// Noise jumped at t; `n` is the new state.
  virtual void on_jump(double /*t*/, const KineticField& /*f*/, const NoiseState& /*n*/) {}
  virtual void on_output(std::size_t /*index*/, double /*t*/, const KineticField& /*f*/,
                         const NoiseState& /*n*/) {}
};

/// Exact sub-flows of the scaled kinetic equation and their Strang
/// composition. Holds scratch buffers, so one instance per thread.
class KineticSolver {
 public:
  KineticSolver(VelocityModel model, SpectralPtr spectral);

  const VelocityModel& model() const { return model_; }
  const Grid& grid() const { return spectral_->grid(); }

  /// f(·, v_i) ← f(· − a(v_i) τ/ε, v_i), as a spectral phase shift. Nyquist
  /// components are damped by the cosine of their phase so the result stays
  /// real; for grid-aligned shifts the translation is an exact rotation.
  void step_transport(KineticField& f, double tau, double epsilon);
  /// f ← ρ + e^{−τ/ε²}(f − ρ).
  void step_collision(KineticField& f, double tau, double epsilon) const;
  /// f ← f · exp(m τ/ε) for a frozen noise field m.
  void step_noise_multiplication(KineticField& f, double tau, double epsilon, const GridFunction& m);
  /// Same, reading m from `path`; throws if [t0, t0+τ] straddles a jump.
  void step_noise_multiplication(KineticField& f, double t0, double tau, double epsilon,
                                 const NoiseModel& noise, const NoisePath& path);

  /// Collision–transport–noise–transport–collision with half steps, m frozen.
  void strang_step(KineticField& f, double h, double epsilon, const GridFunction& m);

  /// Advances f from cursor time t over dt, splitting the step at every noise
  /// jump inside (t, t + dt]. Returns the new time.
  double advance(KineticField& f, NoiseCursor& cursor, double t, double dt,
                 TrajectoryObserver* observer = nullptr);

 private:
  VelocityModel model_;
  SpectralPtr spectral_;
  std::vector<Complex> hat_;
  std::vector<double> multiplier_;
  std::vector<double> rho_;
};

struct TrajectoryOptions {
  /// Macroscopic output times in (0, T]; defaults to {T}.
  std::vector<double> output_times;
  bool record_density = true;
  /// Relative slack in the pathwise energy check.
  double gronwall_tolerance = 1e-12;
  TrajectoryObserver* observer = nullptr;
};

struct TrajectoryResult {
  std::vector<double> times;
  std::vector<GridFunction> density;    // ρ^ε at output times (if recorded)
  std::vector<double> norm_squared;     // ‖f^ε‖²_{L²} at output times
  double initial_norm_squared = 0.0;
  std::size_t steps = 0;
  std::size_t jumps = 0;
  std::size_t gronwall_checks = 0;
  std::size_t gronwall_violations = 0;
  /// max over checks of ‖f(t)‖² / (e^{2C_* t/ε}‖f₀‖²).
  double gronwall_max_ratio = 0.0;
};

/// One pathwise solution over [0, T]: draws a stationary noise path of
/// microscopic length T/ε² from `rng` and integrates with Δt = β ε².
TrajectoryResult solve_trajectory(const KineticField& f0, const SolverConfig& config, KineticSolver& solver,
                                  const NoiseModel& noise, RngStream& rng, const TrajectoryOptions& options = {});

/// Same with an explicit noise path.
TrajectoryResult solve_trajectory(const KineticField& f0, const SolverConfig& config, KineticSolver& solver,
                                  const NoiseModel& noise, const NoisePath& path,
                                  const TrajectoryOptions& options = {});

/// Step boundaries hitting every output time: segments of equal length no
/// longer than dt.
std::vector<double> step_schedule(double dt, const std::vector<double>& output_times);

}  // namespace kinlim
