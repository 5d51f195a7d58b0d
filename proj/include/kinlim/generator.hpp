#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "kinlim/kinetic_solver.hpp"
#include "kinlim/markov_noise.hpp"
#include "kinlim/stats.hpp"
#include "kinlim/velocity_space.hpp"

namespace kinlim {

enum class FunctionalKind { Linear, Quadratic };

/// φ(ρ) = (ρ, w) or ½(ρ, w)². Both are polynomial of degree ≤ 2, so Dφ, D²φ
/// are closed form and D³φ = 0.
class TestFunctional {
 public:
  TestFunctional(FunctionalKind kind, GridFunction weight, std::string id = {});

  FunctionalKind kind() const { return kind_; }
  const GridFunction& weight() const { return weight_; }
  const std::string& id() const { return id_; }

  double value(std::span<const double> rho) const;
  /// Riesz representative g of Dφ(ρ): Dφ(ρ)·h = (h, g).
  GridFunction gradient(std::span<const double> rho) const;
  /// D²φ(ρ)(a, b); independent of ρ.
  double hessian(std::span<const double> a, std::span<const double> b) const;

 private:
  FunctionalKind kind_;
  GridFunction weight_;
  std::string id_;
};

/// Expansion of ℒ^εφ^ε = ε⁻²T₋₂ + ε⁻¹T₋₁ + T₀ + εT₁.
struct GeneratorTerms {
  double minus2 = 0.0;
  double minus1 = 0.0;
  double zero = 0.0;
  double one = 0.0;

  double total(double epsilon) const { return minus2 / (epsilon * epsilon) + minus1 / epsilon + zero + epsilon * one; }
};

struct Corrector2Parts {
  double sharp = 0.0;  // fluid part, depends on f only
  double mixed = 0.0;  // linear in f − ρ and in the noise
  double random = 0.0; // ρ-quadratic part solved on pair chains
  double total() const { return sharp + mixed + random; }
};

/// Perturbed test function φ^ε = φ + εφ₁ + ε²φ₂ for one functional, velocity
/// model and noise model, with every chain-dependent table precomputed.
class PerturbedTestFunction {
 public:
  /// Largest product state space accepted for a pairwise Poisson solve.
  static constexpr std::size_t kPairBudget = 1024;

  PerturbedTestFunction(TestFunctional phi, VelocityModel velocity, std::shared_ptr<const NoiseModel> noise);

  const TestFunctional& functional() const { return phi_; }
  const NoiseModel& noise() const { return *noise_; }
  const VelocityModel& velocity() const { return velocity_; }

  double phi(const KineticField& f) const;
  double corrector1(const KineticField& f, const NoiseState& n) const;
  double corrector2(const KineticField& f, const NoiseState& n) const { return corrector2_parts(f, n).total(); }
  Corrector2Parts corrector2_parts(const KineticField& f, const NoiseState& n) const;
  double value(const KineticField& f, const NoiseState& n, double epsilon) const;

  GeneratorTerms generator_terms(const KineticField& f, const NoiseState& n) const;
  double generator_eps(const KineticField& f, const NoiseState& n, double epsilon) const {
    return generator_terms(f, n).total(epsilon);
  }
  /// ℒφ(ρ) = (div K∇ρ, Dφ) + ½(Fρ, Dφ) + ½Σ c_j D²φ(ρη_j, ρη_j).
  double generator_limit(std::span<const double> rho) const;

  /// d⟨M⟩/dt = Σ_jumps rate·(Δφ₁ + εΔφ₂)², the exact bracket density of the
  /// martingale attached to φ^ε (only noise jumps contribute).
  double bracket_rate(const KineticField& f, const NoiseState& n, double epsilon) const;
  /// Leading term M|φ₁|² − 2φ₁Mφ₁.
  double leading_bracket_rate(const KineticField& f, const NoiseState& n) const;

  /// (Mψ)(n) = Σ_j Σ_{l≠n_j} G_j[n_j][l] (ψ(n with n_j = l) − ψ(n)).
  double apply_generator(const std::function<double(const NoiseState&)>& psi, const NoiseState& n) const;

  /// Ψ_jk = M⁻¹(⟨θ⟩ − θ), θ = s_j(n_j) φ_k(n_k), as a table over (n_j, n_k);
  /// for j = k over n_j alone.
  const Eigen::VectorXd& pair_table(std::size_t j, std::size_t k) const { return psi_[j * nm_ + k]; }

  /// div K∇ρ evaluated as Σ_i μ_i (a_i·∇)²ρ (Nyquist components dropped).
  GridFunction diffusion_operator(std::span<const double> rho) const;

 private:
  struct Frame;
  struct NoiseFrame;
  Frame make_frame(const KineticField& f) const;
  NoiseFrame make_noise_frame(const Frame& fr, const NoiseState& n) const;

  double phi1(const Frame& fr, const NoiseFrame& nf) const;
  double phi2_sharp(const Frame& fr) const;
  double phi2_mixed(const Frame& fr, const NoiseFrame& nf) const;
  double phi2_random(const Frame& fr, const NoiseState& n) const;
  double phi2(const Frame& fr, const NoiseFrame& nf) const;
  double d_phi(const Frame& fr, const KineticField& h) const;
  double d_phi1(const Frame& fr, const NoiseFrame& nf, const KineticField& h) const;
  double d_phi2(const Frame& fr, const NoiseFrame& nf, const KineticField& h) const;
  double pair_value(std::size_t j, std::size_t k, const NoiseState& n) const;

  void apply_A(const KineticField& f, KineticField& out) const;
  GridFunction average_A(const KineticField& f) const;
  GridFunction average_A2(const KineticField& f) const;
  GridFunction average_A_times(const KineticField& f, const GridFunction& m) const;
  double hess(std::span<const double> a, std::span<const double> b) const { return phi_.hessian(a, b); }

  TestFunctional phi_;
  VelocityModel velocity_;
  std::shared_ptr<const NoiseModel> noise_;
  SpectralPtr spectral_;
  std::size_t nm_ = 0;
  std::vector<Eigen::VectorXd> resolvent_s_;    // (I − G_j)⁻¹ s_j
  std::vector<Eigen::VectorXd> resolvent_phi_;  // (I − G_j)⁻¹ φ_j
  std::vector<Eigen::VectorXd> psi_;            // pair tables, index j * nm_ + k
  GridFunction trace_;
};

/// Streams M^ε(t) = φ^ε(f(t), n(t)) − φ^ε(f₀, n₀) − ∫₀ᵗ ℒ^εφ^ε ds along one
/// trajectory, with the time integral taken by the trapezoid rule on every
/// constant-noise sub-interval, together with ∫ d⟨M⟩/dt ds.
class MartingaleTracker : public TrajectoryObserver {
 public:
  MartingaleTracker(std::vector<const PerturbedTestFunction*> functionals, double epsilon,
                    bool track_bracket = true);

  void on_start(double t, const KineticField& f, const NoiseState& n) override;
  void on_interval_end(double t, const KineticField& f, const NoiseState& n) override;
  void on_jump(double t, const KineticField& f, const NoiseState& n) override;
  void on_output(std::size_t index, double t, const KineticField& f, const NoiseState& n) override;

  /// residuals()[k][i]: M^ε for functional k at output i.
  const std::vector<std::vector<double>>& residuals() const { return residual_; }
  /// brackets()[k][i]: ∫ d⟨M⟩ up to output i.
  const std::vector<std::vector<double>>& brackets() const { return bracket_; }

 private:
  void evaluate(const KineticField& f, const NoiseState& n, std::vector<double>& gen, std::vector<double>& br) const;

  std::vector<const PerturbedTestFunction*> fns_;
  double epsilon_;
  bool track_bracket_;
  double t_left_ = 0.0;
  std::vector<double> initial_, integral_, bracket_integral_;
  std::vector<double> left_gen_, left_br_, right_gen_, right_br_;
  std::vector<std::vector<double>> residual_, bracket_;
};

struct MartingaleCheckpoint {
  double time = 0.0;
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  std::size_t count = 0;
  /// |mean| ≤ 3·stderr.
  bool within_band = false;
};

/// Ensemble summary of martingale samples[trajectory][checkpoint]; rejects
/// fewer than 100 trajectories.
std::vector<MartingaleCheckpoint> martingale_residual(const std::vector<std::vector<double>>& samples,
                                                      const std::vector<double>& times);

}  // namespace kinlim
