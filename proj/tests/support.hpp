#pragma once

#include <memory>
#include <random>
#include <vector>

#include "kinlim/grid.hpp"
#include "kinlim/markov_noise.hpp"
#include "kinlim/velocity_space.hpp"

namespace kinlim::fixtures {

inline VelocityModel two_speed() { return {1, {{-1.0, 0.0}, {1.0, 0.0}}, {0.5, 0.5}}; }

inline VelocityModel four_speed() {
  return {1, {{-1.0, 0.0}, {-0.5, 0.0}, {0.5, 0.0}, {1.0, 0.0}}, {0.25, 0.25, 0.25, 0.25}};
}

inline VelocityModel square_2d() {
  return {2, {{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}, {0.0, -1.0}}, {0.25, 0.25, 0.25, 0.25}};
}

inline SpectralPtr spectral(int dim, int n) { return std::make_shared<const Spectral>(Grid(dim, n)); }

/// cos(2πx), sin(2πx) modes, each driven by a telegraph chain.
inline std::shared_ptr<const NoiseModel> cos_sin_telegraph(const SpectralPtr& sp, double sigma = 1.0,
                                                           double rate = 1.0) {
  const Grid& g = sp->grid();
  return std::make_shared<const NoiseModel>(
      sp, std::vector<GridFunction>{fourier_mode(g, Trig::Cos, {1, 0}), fourier_mode(g, Trig::Sin, {1, 0})},
      std::vector<ChainSpec>{ChainSpec::telegraph(sigma, rate), ChainSpec::telegraph(sigma, rate)});
}

/// Centered three-state chain used where a non-symmetric generator matters.
inline ChainSpec three_state() {
  Eigen::MatrixXd g(3, 3);
  g << 0.0, 1.0, 0.5, 2.0, 0.0, 1.0, 0.5, 1.5, 0.0;
  // States chosen afterwards to be centered under the stationary law.
  Eigen::VectorXd pi = stationary_law([&] {
    Eigen::MatrixXd h = g;
    for (int k = 0; k < 3; ++k) h(k, k) = -(h.row(k).sum() - h(k, k));
    return h;
  }());
  std::vector<double> s{1.0, -0.5, 0.0};
  s[2] = -(pi(0) * s[0] + pi(1) * s[1]) / pi(2);
  return ChainSpec(s, g);
}

/// Smooth random grid function: a few low Fourier modes with N(0,1) weights.
template <class Rng>
GridFunction random_smooth(const Grid& g, Rng& rng, int kmax = 3, double offset = 0.0) {
  std::normal_distribution<double> normal;
  GridFunction f(g.size(), offset);
  for (int k0 = 0; k0 <= kmax; ++k0)
    for (int k1 = (g.dim == 2 ? -kmax : 0); k1 <= (g.dim == 2 ? kmax : 0); ++k1) {
      for (Trig t : {Trig::Cos, Trig::Sin}) {
        const double a = normal(rng) / (1.0 + k0 * k0 + k1 * k1);
        const auto mode = fourier_mode(g, t, {k0, k1});
        for (std::size_t p = 0; p < f.size(); ++p) f[p] += a * mode[p];
      }
    }
  return f;
}

template <class Rng>
KineticField random_kinetic(const Grid& g, std::size_t nvel, Rng& rng, double offset = 1.0) {
  KineticField f(g, nvel);
  for (std::size_t i = 0; i < nvel; ++i) {
    auto v = random_smooth(g, rng, 3, offset);
    std::copy(v.begin(), v.end(), f.velocity(i).begin());
  }
  return f;
}

}  // namespace kinlim::fixtures
