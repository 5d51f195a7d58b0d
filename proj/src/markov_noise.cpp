#include "kinlim/markov_noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>
#include <sstream>

namespace kinlim {

namespace {

constexpr double kCenteringTol = 1e-12;

bool strongly_connected(const Eigen::MatrixXd& g) {
  const Eigen::Index n = g.rows();
  auto reach = [&](bool transpose) {
    std::vector<char> seen(n, 0);
    std::queue<Eigen::Index> todo;
    todo.push(0);
    seen[0] = 1;
    while (!todo.empty()) {
      auto k = todo.front();
      todo.pop();
      for (Eigen::Index l = 0; l < n; ++l) {
        double r = transpose ? g(l, k) : g(k, l);
        if (l != k && r > 0.0 && !seen[l]) {
          seen[l] = 1;
          todo.push(l);
        }
      }
    }
    return std::all_of(seen.begin(), seen.end(), [](char c) { return c != 0; });
  };
  return reach(false) && reach(true);
}

Eigen::VectorXd as_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

double max_gradient(const Spectral& spectral, const GridFunction& f) {
  const Grid& g = spectral.grid();
  GridFunction dx(g.size()), dy(g.size(), 0.0);
  spectral.directional_derivative(f, {1.0, 0.0}, dx);
  if (g.dim == 2) spectral.directional_derivative(f, {0.0, 1.0}, dy);
  double m = 0.0;
  for (std::size_t p = 0; p < g.size(); ++p) m = std::max(m, std::hypot(dx[p], dy[p]));
  return m;
}

}  // namespace

Eigen::VectorXd stationary_law(const Eigen::MatrixXd& generator) {
  const Eigen::Index n = generator.rows();
  Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(n + 1, n + 1);
  bordered.topLeftCorner(n, n) = generator.transpose();
  bordered.topRightCorner(n, 1).setOnes();
  bordered.bottomLeftCorner(1, n).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs(n) = 1.0;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
  if (lu.rank() < n + 1) throw Error("chain is reducible: stationary law is not unique");
  Eigen::VectorXd sol = lu.solve(rhs);
  return sol.head(n);
}

ChainSpec::ChainSpec(std::vector<double> states, Eigen::MatrixXd rates)
    : states_(std::move(states)), generator_(std::move(rates)) {
  const auto n = Eigen::Index(states_.size());
  if (n == 0) throw Error("chain has no states");
  if (generator_.rows() != n || generator_.cols() != n) throw Error("rate matrix does not match state count");
  for (double s : states_)
    if (!std::isfinite(s)) throw Error("chain state values must be finite");
  for (Eigen::Index k = 0; k < n; ++k) {
    double out = 0.0;
    for (Eigen::Index l = 0; l < n; ++l) {
      if (l == k) continue;
      if (!(generator_(k, l) >= 0.0) || !std::isfinite(generator_(k, l)))
        throw Error("jump rates must be finite and nonnegative");
      out += generator_(k, l);
    }
    generator_(k, k) = -out;
  }
  if (n == 1) {
    if (states_[0] != 0.0) throw Error("single-state chain must sit at 0 to be centered");
  } else if (!strongly_connected(generator_)) {
    throw Error("chain is reducible");
  }
  pi_ = kinlim::stationary_law(generator_);
  double center = pi_.dot(as_vector(states_));
  if (std::abs(center) > kCenteringTol * std::max(1.0, max_abs_state())) {
    std::ostringstream os;
    os << "chain is not centered under its stationary law (mean " << center << ")";
    throw Error(os.str());
  }
}

ChainSpec ChainSpec::telegraph(double sigma, double rate) {
  if (!(rate > 0.0)) throw Error("telegraph rate must be positive");
  Eigen::MatrixXd g(2, 2);
  g << -rate, rate, rate, -rate;
  return ChainSpec({-sigma, sigma}, g);
}

double ChainSpec::max_abs_state() const {
  double m = 0.0;
  for (double s : states_) m = std::max(m, std::abs(s));
  return m;
}

Eigen::VectorXd solve_poisson(const Eigen::MatrixXd& generator, const Eigen::VectorXd& pi,
                              const Eigen::VectorXd& theta) {
  const Eigen::Index n = generator.rows();
  if (theta.size() != n || pi.size() != n) throw Error("observable does not match chain size");
  Eigen::VectorXd centered = theta.array() - pi.dot(theta);
  Eigen::MatrixXd bordered = Eigen::MatrixXd::Zero(n + 1, n + 1);
  bordered.topLeftCorner(n, n) = generator;
  bordered.topRightCorner(n, 1).setOnes();
  bordered.bottomLeftCorner(1, n) = pi.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + 1);
  rhs.head(n) = centered;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(bordered);
  if (lu.rank() < n + 1) throw Error("Poisson equation is singular beyond constants: chain is reducible");
  Eigen::VectorXd sol = lu.solve(rhs);
  return sol.head(n);
}

Eigen::VectorXd solve_poisson(const ChainSpec& chain, const Eigen::VectorXd& theta) {
  return solve_poisson(chain.generator(), chain.stationary_law(), theta);
}

double integrated_autocovariance(const ChainSpec& chain) {
  Eigen::VectorXd s = as_vector(chain.states());
  Eigen::VectorXd phi = solve_poisson(chain, s);
  return -2.0 * (chain.stationary_law().array() * s.array() * phi.array()).sum();
}

NoiseModel::NoiseModel(SpectralPtr spectral, std::vector<GridFunction> modes, std::vector<ChainSpec> chains)
    : spectral_(std::move(spectral)), modes_(std::move(modes)), chains_(std::move(chains)) {
  if (!spectral_) throw Error("noise model needs a grid");
  if (modes_.size() != chains_.size()) throw Error("each noise mode needs exactly one chain");
  if (modes_.size() > kMaxModes) throw Error("too many noise modes (limit 16)");
  const Grid& g = grid();
  for (const auto& eta : modes_) {
    if (eta.size() != g.size()) throw Error("noise mode does not match grid");
    for (double x : eta)
      if (!std::isfinite(x)) throw Error("noise mode has non-finite values");
  }
  double sup_m = 0.0, grad_m = 0.0, sup_inv = 0.0, grad_inv = 0.0;
  for (std::size_t j = 0; j < modes_.size(); ++j) {
    const auto& chain = chains_[j];
    state_values_.push_back(as_vector(chain.states()));
    phi_.push_back(solve_poisson(chain, state_values_.back()));
    c_.push_back(integrated_autocovariance(chain));
    double eta_sup = max_abs(modes_[j]);
    double eta_grad = max_gradient(*spectral_, modes_[j]);
    double s_sup = chain.max_abs_state();
    double phi_sup = phi_.back().cwiseAbs().maxCoeff();
    sup_m += eta_sup * s_sup;
    grad_m += eta_grad * s_sup;
    sup_inv += eta_sup * phi_sup;
    grad_inv += eta_grad * phi_sup;
  }
  sup_bound_ = sup_m;
  c_star_ = std::max({sup_m, grad_m, sup_inv, grad_inv});
}

GridFunction NoiseModel::combine(const NoiseState& n, std::span<const Eigen::VectorXd> values) const {
  if (n.size() != modes_.size() || values.size() != modes_.size()) throw Error("noise state does not match model");
  GridFunction out(grid().size(), 0.0);
  for (std::size_t j = 0; j < modes_.size(); ++j) {
    if (n[j] < 0 || std::size_t(n[j]) >= chains_[j].size()) throw Error("noise state index out of range");
    const double a = values[j](n[j]);
    if (a == 0.0) continue;
    const auto& eta = modes_[j];
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += a * eta[p];
  }
  return out;
}

GridFunction noise_field(const NoiseModel& model, const NoiseState& n) {
  return model.combine(n, model.state_values_);
}

GridFunction m_inverse_field(const NoiseModel& model, const NoiseState& n) {
  std::vector<Eigen::VectorXd> phis;
  for (std::size_t j = 0; j < model.num_modes(); ++j) phis.push_back(model.poisson_identity(j));
  return model.combine(n, phis);
}

NoiseState sample_stationary(std::span<const ChainSpec> chains, RngStream& rng) {
  NoiseState n(chains.size());
  for (std::size_t j = 0; j < chains.size(); ++j) {
    const auto& pi = chains[j].stationary_law();
    double u = rng.uniform();
    int k = 0;
    double acc = pi(0);
    while (u >= acc && k + 1 < pi.size()) acc += pi(++k);
    n[j] = k;
  }
  return n;
}

NoiseState sample_stationary(const NoiseModel& model, RngStream& rng) {
  std::vector<ChainSpec> chains;
  chains.reserve(model.num_modes());
  for (std::size_t j = 0; j < model.num_modes(); ++j) chains.push_back(model.chain(j));
  return sample_stationary(chains, rng);
}

NoiseState NoisePath::state_at(double t) const {
  NoiseState n = initial;
  for (const auto& e : events) {
    if (e.time > t) break;
    n[e.chain] = e.state;
  }
  return n;
}

NoisePath simulate_path(std::span<const ChainSpec> chains, NoiseState initial, double horizon, RngStream& rng) {
  if (!(horizon >= 0.0)) throw Error("noise horizon must be nonnegative");
  if (initial.size() != chains.size()) throw Error("initial noise state does not match chains");
  NoisePath path;
  path.horizon = horizon;
  path.initial = initial;
  path.per_chain.resize(chains.size());
  std::exponential_distribution<double> unit_exp(1.0);
  for (std::size_t j = 0; j < chains.size(); ++j) {
    const auto& chain = chains[j];
    const auto& g = chain.generator();
    int state = initial[j];
    double t = 0.0;
    while (true) {
      double rate = chain.exit_rate(state);
      if (rate <= 0.0) break;
      t += unit_exp(rng) / rate;
      if (t > horizon) break;
      double u = rng.uniform() * rate;
      int next = -1;
      double acc = 0.0;
      for (Eigen::Index l = 0; l < g.cols(); ++l) {
        if (l == state) continue;
        acc += g(state, l);
        next = int(l);
        if (u < acc) break;
      }
      state = next;
      path.per_chain[j].push_back({t, int(j), state});
    }
  }
  for (const auto& jumps : path.per_chain) path.events.insert(path.events.end(), jumps.begin(), jumps.end());
  std::sort(path.events.begin(), path.events.end(), [](const NoiseJump& a, const NoiseJump& b) {
    return a.time < b.time || (a.time == b.time && a.chain < b.chain);
  });
  return path;
}

NoisePath simulate_path(const NoiseModel& model, double horizon, RngStream& rng) {
  std::vector<ChainSpec> chains;
  for (std::size_t j = 0; j < model.num_modes(); ++j) chains.push_back(model.chain(j));
  NoiseState initial = sample_stationary(chains, rng);
  return simulate_path(chains, std::move(initial), horizon, rng);
}

KernelAndTrace kernel_and_trace(const NoiseModel& model) {
  const std::size_t npts = model.grid().size();
  KernelAndTrace out;
  out.points = npts;
  out.kernel.assign(npts * npts, 0.0);
  for (std::size_t j = 0; j < model.num_modes(); ++j) {
    const double c = model.autocovariance(j);
    const auto& eta = model.mode(j);
    for (std::size_t p = 0; p < npts; ++p) {
      const double a = c * eta[p];
      double* row = out.kernel.data() + p * npts;
      for (std::size_t q = 0; q < npts; ++q) row[q] += a * eta[q];
    }
  }
  out.trace.resize(npts);
  for (std::size_t p = 0; p < npts; ++p) out.trace[p] = out.kernel[p * npts + p];
  return out;
}

GridFunction trace_field(const NoiseModel& model) {
  GridFunction f(model.grid().size(), 0.0);
  for (std::size_t j = 0; j < model.num_modes(); ++j) {
    const double c = model.autocovariance(j);
    const auto& eta = model.mode(j);
    for (std::size_t p = 0; p < f.size(); ++p) f[p] += c * eta[p] * eta[p];
  }
  return f;
}

GridFunction apply_Q(const NoiseModel& model, std::span<const double> f) {
  if (f.size() != model.grid().size()) throw Error("grid function does not match noise model grid");
  GridFunction out(f.size(), 0.0);
  for (std::size_t j = 0; j < model.num_modes(); ++j) {
    const auto& eta = model.mode(j);
    const double a = model.autocovariance(j) * inner(eta, f);
    for (std::size_t p = 0; p < out.size(); ++p) out[p] += a * eta[p];
  }
  return out;
}

}  // namespace kinlim
