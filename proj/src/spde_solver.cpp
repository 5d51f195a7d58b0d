#include "kinlim/spde_solver.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "kinlim/kinetic_solver.hpp"

namespace kinlim {

LimitCoefficients LimitCoefficients::from_models(const VelocityModel& velocity, const NoiseModel& noise) {
  LimitCoefficients out;
  out.diffusion = diffusion_matrix(velocity);
  for (std::size_t j = 0; j < noise.num_modes(); ++j) {
    GridFunction r = noise.mode(j);
    const double s = std::sqrt(noise.autocovariance(j));
    for (double& x : r) x *= s;
    out.noise_factors.push_back(std::move(r));
  }
  out.trace = trace_field(noise);
  return out;
}

void heat_step(const Spectral& spectral, DensityField& rho, double dt, const Matrix2& diffusion) {
  if (dt == 0.0) return;
  if (!(dt > 0.0)) throw Error("heat step needs dt >= 0");
  std::vector<Complex> hat(spectral.spectral_size());
  spectral.forward(rho, hat);
  const double c = 4.0 * std::numbers::pi * std::numbers::pi * dt;
  const int dim = spectral.grid().dim;
  for (std::size_t s = 0; s < hat.size(); ++s) {
    const auto k = spectral.wavevector(s);
    double q = diffusion[0][0] * k[0] * k[0];
    if (dim == 2) {
      q += diffusion[1][1] * k[1] * k[1];
      if (!spectral.nyquist(s, 0) && !spectral.nyquist(s, 1)) q += 2.0 * diffusion[0][1] * k[0] * k[1];
    }
    hat[s] *= std::exp(-c * q);
  }
  spectral.inverse(hat, rho);
}

void spde_step(const Spectral& spectral, DensityField& rho, double dt, const LimitCoefficients& coefficients,
               std::span<const double> increments) {
  if (increments.size() != coefficients.num_modes()) throw Error("one Brownian increment per noise mode required");
  heat_step(spectral, rho, dt, coefficients.diffusion);
  if (coefficients.num_modes() == 0) return;
  for (std::size_t p = 0; p < rho.size(); ++p) {
    double exponent = 0.0;
    for (std::size_t j = 0; j < increments.size(); ++j) exponent += coefficients.noise_factors[j][p] * increments[j];
    rho[p] *= std::exp(exponent);
  }
}

double drift_consistency(const LimitCoefficients& coefficients) {
  double worst = 0.0;
  for (std::size_t p = 0; p < coefficients.trace.size(); ++p) {
    double half_var = 0.0;
    for (const auto& r : coefficients.noise_factors) half_var += 0.5 * r[p] * r[p];
    worst = std::max(worst, std::abs(half_var - 0.5 * coefficients.trace[p]));
  }
  return worst;
}

SpdeTrajectoryResult solve_spde_trajectory(const Spectral& spectral, const DensityField& rho0,
                                           const LimitCoefficients& coefficients, double dt,
                                           const std::vector<double>& output_times, RngStream& rng) {
  if (rho0.size() != spectral.grid().size()) throw Error("initial density does not match grid");
  SpdeTrajectoryResult out;
  DensityField rho = rho0;
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> increments(coefficients.num_modes());
  const auto nodes = step_schedule(dt, output_times);
  std::size_t next_output = 0;
  double t = 0.0;
  for (double node : nodes) {
    const double h = node - t;
    const double sd = std::sqrt(h);
    for (double& b : increments) b = sd * normal(rng);
    spde_step(spectral, rho, h, coefficients, increments);
    t = node;
    if (next_output < output_times.size() && node == output_times[next_output]) {
      out.times.push_back(node);
      out.density.push_back(rho);
      ++next_output;
    }
  }
  return out;
}

}  // namespace kinlim
