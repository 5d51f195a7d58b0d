#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "kinlim/grid.hpp"

namespace kinlim {

using Velocity = std::array<double, 2>;
using Matrix2 = std::array<std::array<double, 2>, 2>;

/// Finite velocity set V = {v_i} with probability weights μ(v_i) and the
/// velocity map a(v_i) ∈ ℝᵈ. Immutable once built.
struct VelocityModel {
  int dim = 1;
  std::vector<Velocity> velocities;
  std::vector<double> weights;

  std::size_t size() const { return velocities.size(); }
};

/// Structural hypotheses violated by `model`; empty when the model is usable.
/// The diffusion matrix counts as singular when its smallest eigenvalue is not
/// above 1e-10 times the largest.
std::vector<std::string> validate(const VelocityModel& model);

/// K = Σ μ_i a_i ⊗ a_i. Throws Error if the model fails validate().
Matrix2 diffusion_matrix(const VelocityModel& model);

/// Eigenvalues of the leading dim×dim block of a symmetric matrix, ascending.
std::array<double, 2> symmetric_eigenvalues(const Matrix2& m, int dim);

/// Distribution f(x, v) on grid × velocity index, velocity-major storage:
/// values[i * grid.size() + p] is f(x_p, v_i).
class KineticField {
 public:
  KineticField() = default;
  KineticField(Grid grid, std::size_t nvel, double fill = 0.0);
  /// Velocity-independent field f(x, v) = rho(x).
  static KineticField from_density(Grid grid, std::size_t nvel, std::span<const double> rho);

  const Grid& grid() const { return grid_; }
  std::size_t nvel() const { return nvel_; }
  std::span<double> velocity(std::size_t i) { return {values_.data() + i * grid_.size(), grid_.size()}; }
  std::span<const double> velocity(std::size_t i) const {
    return {values_.data() + i * grid_.size(), grid_.size()};
  }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

 private:
  Grid grid_;
  std::size_t nvel_ = 0;
  std::vector<double> values_;
};

/// ρ(x) = Σ μ_i f(x, v_i).
GridFunction average(const VelocityModel& model, const KineticField& f);

/// Relaxation operator Lf = ρ − f.
KineticField apply_collision_operator(const VelocityModel& model, const KineticField& f);

/// L²_{x,v} pairing Σ μ_i (f_i, g_i).
double inner(const VelocityModel& model, const KineticField& f, const KineticField& g);
double norm_squared(const VelocityModel& model, const KineticField& f);

}  // namespace kinlim
