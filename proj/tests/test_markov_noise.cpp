#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <unsupported/Eigen/MatrixFunctions>

#include "kinlim/markov_noise.hpp"
#include "kinlim/stats.hpp"
#include "support.hpp"

using namespace kinlim;

namespace {

// c = 2 ∫_0^∞ Σ_k π_k s_k (e^{tG} s)_k dt by composite Simpson on [0, 40]
// with matrix exponentials; independent of the Poisson-solve route.
double autocovariance_by_quadrature(const ChainSpec& chain) {
  const auto& g = chain.generator();
  const auto& pi = chain.stationary_law();
  Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(chain.states().data(), Eigen::Index(chain.size()));
  const int n = 4000;
  const double t_end = 40.0, h = t_end / n;
  Eigen::MatrixXd step = (g * h).exp();
  Eigen::VectorXd v = s;
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    double c = pi.dot(s.cwiseProduct(v));
    double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * c;
    v = step * v;
  }
  return 2.0 * sum * h / 3.0;
}

}  // namespace

TEST(ChainSpec, TelegraphStationaryLaw) {
  auto c = ChainSpec::telegraph(2.0, 3.0);
  EXPECT_NEAR(c.stationary_law()(0), 0.5, 1e-15);
  EXPECT_NEAR(c.exit_rate(0), 3.0, 0.0);
}

TEST(ChainSpec, RejectsReducible) {
  Eigen::MatrixXd g(3, 3);
  g << 0, 1, 0, 1, 0, 0, 0, 0, 0;
  EXPECT_THROW(ChainSpec({-1.0, 1.0, 0.0}, g), Error);
}

TEST(ChainSpec, RejectsUncentered) {
  Eigen::MatrixXd g(2, 2);
  g << 0, 1, 1, 0;
  EXPECT_THROW(ChainSpec({0.0, 1.0}, g), Error);
}

TEST(ChainSpec, RejectsNegativeRates) {
  Eigen::MatrixXd g(2, 2);
  g << 0, -1, 1, 0;
  EXPECT_THROW(ChainSpec({-1.0, 1.0}, g), Error);
}

TEST(Poisson, TelegraphClosedForm) {
  const double sigma = 1.7, lambda = 0.6;
  auto c = ChainSpec::telegraph(sigma, lambda);
  Eigen::Vector2d s(-sigma, sigma);
  auto phi = solve_poisson(c, s);
  // G has eigenvalue −2λ on the odd vector, so φ = −s/(2λ).
  EXPECT_NEAR(phi(0), sigma / (2 * lambda), 1e-12);
  EXPECT_NEAR(phi(1), -sigma / (2 * lambda), 1e-12);
  EXPECT_NEAR(integrated_autocovariance(c), sigma * sigma / lambda, 1e-12);
}

TEST(Poisson, UnitTelegraphAutocovariance) {
  EXPECT_NEAR(integrated_autocovariance(ChainSpec::telegraph(1.0, 1.0)), 1.0, 1e-12);
}

TEST(Poisson, SolutionSatisfiesEquation) {
  auto c = fixtures::three_state();
  Eigen::Vector3d theta(0.3, -1.0, 2.0);
  auto phi = solve_poisson(c, theta);
  Eigen::VectorXd residual = c.generator() * phi - (theta.array() - c.stationary_law().dot(theta)).matrix();
  EXPECT_LT(residual.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(c.stationary_law().dot(phi), 0.0, 1e-13);
}

TEST(Poisson, AutocovarianceMatchesQuadrature) {
  for (const auto& chain : {fixtures::three_state(), ChainSpec::telegraph(0.8, 2.5)}) {
    const double c = integrated_autocovariance(chain);
    EXPECT_GT(c, 0.0);
    EXPECT_NEAR(c, autocovariance_by_quadrature(chain), 1e-8 * std::max(1.0, c));
  }
}

TEST(NoiseModel, BoundTelegraphPair) {
  auto sp = fixtures::spectral(1, 32);
  auto model = fixtures::cos_sin_telegraph(sp, 1.0, 1.0);
  // ‖η‖∞ = 1 (to grid accuracy), ‖∇η‖∞ = 2π, max|s| = 1, max|φ| = 1/2.
  EXPECT_NEAR(model->sup_bound(), 2.0, 1e-12);
  EXPECT_NEAR(model->bound(), 2 * 2 * M_PI, 1e-9);
}

TEST(NoiseModel, RejectsTooManyModes) {
  auto sp = fixtures::spectral(1, 8);
  std::vector<GridFunction> modes(17, constant_function(sp->grid(), 1.0));
  std::vector<ChainSpec> chains(17, ChainSpec::telegraph(1.0, 1.0));
  EXPECT_THROW(NoiseModel(sp, modes, chains), Error);
}

TEST(NoiseModel, FieldsCombineModes) {
  auto sp = fixtures::spectral(1, 16);
  auto model = fixtures::cos_sin_telegraph(sp, 2.0, 1.0);
  NoiseState n{1, 0};
  auto m = noise_field(*model, n);
  auto m1 = m_inverse_field(*model, n);
  for (std::size_t p = 0; p < m.size(); ++p) {
    EXPECT_NEAR(m[p], 2.0 * model->mode(0)[p] - 2.0 * model->mode(1)[p], 1e-14);
    EXPECT_NEAR(m1[p], -m[p] / 2.0, 1e-13);
  }
}

TEST(Covariance, TelegraphPairGivesConstantTrace) {
  auto sp = fixtures::spectral(1, 32);
  auto model = fixtures::cos_sin_telegraph(sp);
  auto kt = kernel_and_trace(*model);
  for (double f : kt.trace) EXPECT_NEAR(f, 1.0, 1e-12);
  for (std::size_t p = 0; p < kt.points; ++p)
    for (std::size_t q = 0; q < kt.points; ++q) EXPECT_NEAR(kt(p, q), kt(q, p), 1e-15);
  auto tr = trace_field(*model);
  for (std::size_t p = 0; p < tr.size(); ++p) EXPECT_NEAR(tr[p], kt.trace[p], 1e-15);
}

TEST(Covariance, QIsNonnegativeAndMatchesKernel) {
  auto sp = fixtures::spectral(2, 8);
  const Grid& g = sp->grid();
  NoiseModel model(sp,
                   {fourier_mode(g, Trig::Cos, {1, 0}), fourier_mode(g, Trig::Sin, {0, 1}),
                    fourier_mode(g, Trig::Cos, {1, 1})},
                   {ChainSpec::telegraph(1.0, 2.0), fixtures::three_state(), ChainSpec::telegraph(0.5, 1.0)});
  auto kt = kernel_and_trace(model);
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 100; ++trial) {
    GridFunction f(g.size());
    for (double& x : f) x = normal(rng);
    auto qf = apply_Q(model, f);
    EXPECT_GE(inner(qf, f), -1e-12 * inner(f, f));
    // (Qf)(x) = ∫ k(x, y) f(y) dy.
    for (std::size_t p = 0; p < g.size(); p += 7) {
      double direct = 0.0;
      for (std::size_t q = 0; q < g.size(); ++q) direct += kt(p, q) * f[q];
      EXPECT_NEAR(qf[p], direct / double(g.size()), 1e-12);
    }
  }
}

TEST(NoisePath, OccupationMatchesStationaryLaw) {
  auto chain = fixtures::three_state();
  RngStream rng(5, 0, 0);
  std::vector<ChainSpec> chains{chain};
  const double horizon = 20000.0;
  auto path = simulate_path(chains, {0}, horizon, rng);
  std::vector<double> occupation(3, 0.0);
  double t = 0.0;
  int state = 0;
  for (const auto& e : path.events) {
    occupation[state] += e.time - t;
    t = e.time;
    state = e.state;
  }
  occupation[state] += horizon - t;
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(occupation[k] / horizon, chain.stationary_law()(k), 0.02);
}

TEST(NoisePath, FieldsStayInsideBound) {
  auto sp = fixtures::spectral(1, 16);
  auto model = std::make_shared<const NoiseModel>(
      sp, std::vector<GridFunction>{fourier_mode(sp->grid(), Trig::Cos, {1, 0}), fourier_mode(sp->grid(), Trig::Sin, {2, 0})},
      std::vector<ChainSpec>{fixtures::three_state(), ChainSpec::telegraph(0.7, 2.0)});
  for (std::uint32_t trial = 0; trial < 5; ++trial) {
    auto rng = trajectory_stream(21, 0, trial);
    auto path = simulate_path(*model, 20.0, rng);
    NoiseState n = path.initial;
    auto check = [&] {
      EXPECT_LE(max_abs(noise_field(*model, n)), model->sup_bound() + 1e-12);
      EXPECT_LE(max_abs(noise_field(*model, n)), model->bound() + 1e-12);
      EXPECT_LE(max_abs(m_inverse_field(*model, n)), model->bound() + 1e-12);
    };
    check();
    for (const auto& e : path.events) {
      n[e.chain] = e.state;
      check();
    }
  }
}

TEST(NoisePath, StateAtFollowsEvents) {
  auto sp = fixtures::spectral(1, 8);
  auto model = fixtures::cos_sin_telegraph(sp, 1.0, 3.0);
  RngStream rng(8, 0, 0);
  auto path = simulate_path(*model, 10.0, rng);
  ASSERT_FALSE(path.events.empty());
  for (std::size_t i = 1; i < path.events.size(); ++i) EXPECT_LE(path.events[i - 1].time, path.events[i].time);
  const auto& e = path.events.front();
  EXPECT_EQ(path.state_at(e.time)[e.chain], e.state);
  EXPECT_EQ(path.state_at(0.0), path.initial);
}

TEST(NoisePath, EmpiricalAutocovarianceOfTelegraph) {
  // c = lim E[(∫_0^τ m dt)²]/τ; at τ = 50 the finite-τ bias is c/(2λτ) = 1%.
  auto chain = ChainSpec::telegraph(1.0, 1.0);
  std::vector<ChainSpec> chains{chain};
  const double tau = 50.0;
  RunningStats stats;
  for (std::uint32_t i = 0; i < 1000; ++i) {
    auto rng = trajectory_stream(123, 0, i);
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
  const double exact_finite = 1.0 - (1.0 - std::exp(-2.0 * tau)) / (2.0 * tau);
  EXPECT_NEAR(stats.mean(), exact_finite, 3.0 * stats.stderr_of_mean());
}
