#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "kinlim/grid.hpp"
#include "kinlim/rng.hpp"

namespace kinlim {

/// Finite-state jump Markov chain: real state values, rate matrix G (rows sum
/// to zero, off-diagonal entries are jump rates) and its stationary law π.
class ChainSpec {
 public:
  /// Validates irreducibility and centering, solves πᵀG = 0. Diagonal entries
  /// of `rates` are ignored and reset to minus the row sums.
  ChainSpec(std::vector<double> states, Eigen::MatrixXd rates);

  /// Two-state chain on {−sigma, +sigma} flipping at `rate` in both directions.
  static ChainSpec telegraph(double sigma, double rate);

  std::size_t size() const { return states_.size(); }
  const std::vector<double>& states() const { return states_; }
  const Eigen::MatrixXd& generator() const { return generator_; }
  const Eigen::VectorXd& stationary_law() const { return pi_; }
  double max_abs_state() const;
  /// Total jump rate out of state k, −G[k][k].
  double exit_rate(std::size_t k) const { return -generator_(k, k); }

 private:
  std::vector<double> states_;
  Eigen::MatrixXd generator_;
  Eigen::VectorXd pi_;
};

/// Stationary law of an irreducible generator; throws on reducible chains.
Eigen::VectorXd stationary_law(const Eigen::MatrixXd& generator);

/// Centered solution φ of Gφ = θ − ⟨θ⟩_π, i.e. φ = M⁻¹(θ − ⟨θ⟩), with ⟨φ⟩_π = 0.
/// Solved through the bordered system [[G, 1], [πᵀ, 0]], which is regular iff
/// the kernel of G is the constants.
Eigen::VectorXd solve_poisson(const Eigen::MatrixXd& generator, const Eigen::VectorXd& pi,
                              const Eigen::VectorXd& theta);
Eigen::VectorXd solve_poisson(const ChainSpec& chain, const Eigen::VectorXd& theta);

/// c = −2 Σ π_k s_k φ_k with φ = M⁻¹(identity); equals ∫_ℝ E[m(0)m(t)] dt.
double integrated_autocovariance(const ChainSpec& chain);

using NoiseState = std::vector<int>;

/// m(t, x) = Σ_j m_j(t) η_j(x) with independent chains m_j.
class NoiseModel {
 public:
  static constexpr std::size_t kMaxModes = 16;

  NoiseModel(SpectralPtr spectral, std::vector<GridFunction> modes, std::vector<ChainSpec> chains);

  const Grid& grid() const { return spectral_->grid(); }
  const SpectralPtr& spectral() const { return spectral_; }
  std::size_t num_modes() const { return modes_.size(); }
  const GridFunction& mode(std::size_t j) const { return modes_[j]; }
  const ChainSpec& chain(std::size_t j) const { return chains_[j]; }

  /// Integrated autocovariance c_j of chain j.
  double autocovariance(std::size_t j) const { return c_[j]; }
  /// Corrector values φ_j = M_j⁻¹(identity) over the states of chain j.
  const Eigen::VectorXd& poisson_identity(std::size_t j) const { return phi_[j]; }
  /// Bound C_* on ‖m‖_{W^{1,∞}} and ‖M⁻¹I‖_{W^{1,∞}} over all states.
  double bound() const { return c_star_; }
  /// Bound on ‖m‖_∞ alone (the constant driving the energy estimate).
  double sup_bound() const { return sup_bound_; }

  /// Field Σ_j values_j[n_j] η_j for per-chain value tables.
  GridFunction combine(const NoiseState& n, std::span<const Eigen::VectorXd> values) const;

 private:
  SpectralPtr spectral_;
  std::vector<GridFunction> modes_;
  std::vector<ChainSpec> chains_;
  std::vector<double> c_;
  std::vector<Eigen::VectorXd> phi_;
  std::vector<Eigen::VectorXd> state_values_;
  double c_star_ = 0.0;
  double sup_bound_ = 0.0;

  friend GridFunction noise_field(const NoiseModel&, const NoiseState&);
};

/// m(n)(x) = Σ_j s_j(n_j) η_j(x).
GridFunction noise_field(const NoiseModel& model, const NoiseState& n);
/// M⁻¹I(n)(x) = Σ_j φ_j(n_j) η_j(x).
GridFunction m_inverse_field(const NoiseModel& model, const NoiseState& n);

/// Independent draws n_j ~ π_j.
NoiseState sample_stationary(std::span<const ChainSpec> chains, RngStream& rng);
NoiseState sample_stationary(const NoiseModel& model, RngStream& rng);

struct NoiseJump {
  double time;  // microscopic time
  int chain;
  int state;
};

/// Exact jump record of all chains over [0, horizon] (microscopic time).
struct NoisePath {
  double horizon = 0.0;
  NoiseState initial;
  std::vector<std::vector<NoiseJump>> per_chain;
  /// All jumps merged in time order.
  std::vector<NoiseJump> events;

  NoiseState state_at(double t) const;
};

NoisePath simulate_path(const NoiseModel& model, double horizon, RngStream& rng);
NoisePath simulate_path(std::span<const ChainSpec> chains, NoiseState initial, double horizon, RngStream& rng);

struct KernelAndTrace {
  std::size_t points = 0;
  std::vector<double> kernel;  // kernel[p * points + q] = k(x_p, x_q)
  GridFunction trace;          // F(x) = k(x, x)

  double operator()(std::size_t p, std::size_t q) const { return kernel[p * points + q]; }
};

/// k(x, y) = Σ_j c_j η_j(x) η_j(y) and F(x) = Σ_j c_j η_j(x)².
KernelAndTrace kernel_and_trace(const NoiseModel& model);
/// F alone, without the dense kernel.
GridFunction trace_field(const NoiseModel& model);

/// (Qf)(x) = Σ_j c_j η_j(x) (η_j, f).
GridFunction apply_Q(const NoiseModel& model, std::span<const double> f);

}  // namespace kinlim
