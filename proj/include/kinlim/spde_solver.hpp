#pragma once

#include <span>
#include <vector>

#include "kinlim/grid.hpp"
#include "kinlim/markov_noise.hpp"
#include "kinlim/velocity_space.hpp"

namespace kinlim {

using DensityField = GridFunction;

/// Coefficients of the limit equation dρ = div(K∇ρ)dt + ½Fρ dt + ρ R dβ,
/// where R β = Σ_j √c_j η_j β_j is a finite-rank factor with R R* = Q.
struct LimitCoefficients {
  Matrix2 diffusion{};
  std::vector<GridFunction> noise_factors;  // √c_j η_j
  GridFunction trace;                       // F

  static LimitCoefficients from_models(const VelocityModel& velocity, const NoiseModel& noise);
  std::size_t num_modes() const { return noise_factors.size(); }
};

/// Exact heat propagator: Fourier mode ξ scaled by exp(−4π² ξᵀKξ Δt). Cross
/// terms of K are dropped on Nyquist components to keep the symbol even.
void heat_step(const Spectral& spectral, DensityField& rho, double dt, const Matrix2& diffusion);

/// Heat propagation over dt followed by the pointwise multiplier
/// exp(Σ_j √c_j η_j Δβ_j); for frozen x this is the exact geometric Brownian
/// step, whose Itô drift is ½Σ_j c_j η_j² = ½F.
void spde_step(const Spectral& spectral, DensityField& rho, double dt, const LimitCoefficients& coefficients,
               std::span<const double> increments);

/// max_x |½ Σ_j (√c_j η_j)² − ½F|.
double drift_consistency(const LimitCoefficients& coefficients);

struct SpdeTrajectoryResult {
  std::vector<double> times;
  std::vector<DensityField> density;
};

/// One trajectory on [0, T] with nominal step dt, landing on every output
/// time; Brownian increments drawn from `rng`.
SpdeTrajectoryResult solve_spde_trajectory(const Spectral& spectral, const DensityField& rho0,
                                           const LimitCoefficients& coefficients, double dt,
                                           const std::vector<double>& output_times, RngStream& rng);

}  // namespace kinlim
