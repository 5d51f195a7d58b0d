#include "kinlim/velocity_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kinlim {

namespace {
constexpr double kWeightSumTol = 1e-12;
constexpr double kFirstMomentTol = 1e-12;
constexpr double kSpdRelTol = 1e-10;

Matrix2 second_moment(const VelocityModel& model) {
  Matrix2 k{};
  for (std::size_t i = 0; i < model.size(); ++i)
    for (int p = 0; p < model.dim; ++p)
      for (int q = 0; q <= p; ++q)
        k[p][q] += model.weights[i] * model.velocities[i][p] * model.velocities[i][q];
  k[0][1] = k[1][0];
  return k;
}
}  // namespace

std::array<double, 2> symmetric_eigenvalues(const Matrix2& m, int dim) {
  if (dim == 1) return {m[0][0], m[0][0]};
  double tr = m[0][0] + m[1][1];
  double diff = m[0][0] - m[1][1];
  double disc = std::sqrt(diff * diff + 4.0 * m[0][1] * m[1][0]);
  return {0.5 * (tr - disc), 0.5 * (tr + disc)};
}

std::vector<std::string> validate(const VelocityModel& model) {
  std::vector<std::string> out;
  if (model.dim != 1 && model.dim != 2) {
    out.push_back("dimension must be 1 or 2");
    return out;
  }
  if (model.velocities.empty()) {
    out.push_back("velocity set is empty");
    return out;
  }
  if (model.weights.size() != model.velocities.size()) {
    out.push_back("weights and velocities differ in length");
    return out;
  }
  if (std::any_of(model.weights.begin(), model.weights.end(), [](double w) { return !(w >= 0.0); }))
    out.push_back("negative weight");

  double total = 0.0;
  for (double w : model.weights) total += w;
  if (std::abs(total - 1.0) > kWeightSumTol) {
    std::ostringstream os;
    os << "weights sum to " << total << ", not 1";
    out.push_back(os.str());
  }

  double scale = 0.0;
  std::array<double, 2> first{};
  for (std::size_t i = 0; i < model.size(); ++i)
    for (int p = 0; p < model.dim; ++p) {
      first[p] += model.weights[i] * model.velocities[i][p];
      scale = std::max(scale, std::abs(model.velocities[i][p]));
    }
  for (int p = 0; p < model.dim; ++p)
    if (std::abs(first[p]) > kFirstMomentTol * std::max(1.0, scale)) {
      out.push_back("first moment nonzero");
      break;
    }

  auto ev = symmetric_eigenvalues(second_moment(model), model.dim);
  if (!(ev[0] > kSpdRelTol * ev[1]) || !(ev[1] > 0.0)) out.push_back("K singular");
  return out;
}

Matrix2 diffusion_matrix(const VelocityModel& model) {
  auto violations = validate(model);
  if (!violations.empty()) throw Error("invalid velocity model: " + violations.front());
  return second_moment(model);
}

KineticField::KineticField(Grid grid, std::size_t nvel, double fill)
    : grid_(grid), nvel_(nvel), values_(grid.size() * nvel, fill) {}

KineticField KineticField::from_density(Grid grid, std::size_t nvel, std::span<const double> rho) {
  if (rho.size() != grid.size()) throw Error("density does not match grid");
  KineticField f(grid, nvel);
  for (std::size_t i = 0; i < nvel; ++i) std::copy(rho.begin(), rho.end(), f.velocity(i).begin());
  return f;
}

GridFunction average(const VelocityModel& model, const KineticField& f) {
  if (f.nvel() != model.size()) throw Error("kinetic field velocity count does not match model");
  GridFunction rho(f.grid().size(), 0.0);
  for (std::size_t i = 0; i < model.size(); ++i) {
    auto fi = f.velocity(i);
    const double w = model.weights[i];
    for (std::size_t p = 0; p < rho.size(); ++p) rho[p] += w * fi[p];
  }
  return rho;
}

KineticField apply_collision_operator(const VelocityModel& model, const KineticField& f) {
  auto rho = average(model, f);
  KineticField out(f.grid(), f.nvel());
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    auto fi = f.velocity(i);
    auto oi = out.velocity(i);
    for (std::size_t p = 0; p < rho.size(); ++p) oi[p] = rho[p] - fi[p];
  }
  return out;
}

double inner(const VelocityModel& model, const KineticField& f, const KineticField& g) {
  if (f.nvel() != model.size() || g.nvel() != model.size() || !(f.grid() == g.grid()))
    throw Error("kinetic fields do not match");
  double s = 0.0;
  for (std::size_t i = 0; i < model.size(); ++i) s += model.weights[i] * inner(f.velocity(i), g.velocity(i));
  return s;
}

double norm_squared(const VelocityModel& model, const KineticField& f) { return inner(model, f, f); }

}  // namespace kinlim
