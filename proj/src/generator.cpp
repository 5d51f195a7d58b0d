#include "kinlim/generator.hpp"

#include <cmath>
#include <sstream>

namespace kinlim {

namespace {

constexpr std::size_t kMinMartingaleTrajectories = 100;

GridFunction times(std::span<const double> a, std::span<const double> b) {
  GridFunction out(a.size());
  for (std::size_t p = 0; p < a.size(); ++p) out[p] = a[p] * b[p];
  return out;
}

Eigen::VectorXd resolvent(const Eigen::MatrixXd& g, const Eigen::VectorXd& v) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(g.rows(), g.cols()) - g;
  return a.partialPivLu().solve(v);
}

Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

}  // namespace

TestFunctional::TestFunctional(FunctionalKind kind, GridFunction weight, std::string id)
    : kind_(kind), weight_(std::move(weight)), id_(std::move(id)) {
  if (weight_.empty()) throw Error("test functional needs a weight");
  for (double x : weight_)
    if (!std::isfinite(x)) throw Error("test functional weight must be finite");
}

double TestFunctional::value(std::span<const double> rho) const {
  const double a = inner(rho, weight_);
  return kind_ == FunctionalKind::Linear ? a : 0.5 * a * a;
}

GridFunction TestFunctional::gradient(std::span<const double> rho) const {
  if (kind_ == FunctionalKind::Linear) return weight_;
  GridFunction g = weight_;
  const double a = inner(rho, weight_);
  for (double& x : g) x *= a;
  return g;
}

double TestFunctional::hessian(std::span<const double> a, std::span<const double> b) const {
  if (kind_ == FunctionalKind::Linear) return 0.0;
  return inner(a, weight_) * inner(b, weight_);
}

struct PerturbedTestFunction::Frame {
  const KineticField* f = nullptr;
  GridFunction rho;
  KineticField u;  // f − ρ
  GridFunction g;
  GridFunction au;   // overline{A u}
  GridFunction a2u;  // overline{A² u}
};

struct PerturbedTestFunction::NoiseFrame {
  const NoiseState* n = nullptr;
  GridFunction m, m1;    // Σ s_j η_j, Σ φ_j η_j
  GridFunction mt, mt1;  // resolvent-smoothed versions
  GridFunction aumt;     // overline{A(u m̃)}
};

PerturbedTestFunction::PerturbedTestFunction(TestFunctional phi, VelocityModel velocity,
                                             std::shared_ptr<const NoiseModel> noise)
    : phi_(std::move(phi)), velocity_(std::move(velocity)), noise_(std::move(noise)) {
  if (!noise_) throw Error("perturbed test function needs a noise model");
  spectral_ = noise_->spectral();
  auto violations = validate(velocity_);
  if (!violations.empty()) throw Error("invalid velocity model: " + violations.front());
  if (velocity_.dim != spectral_->grid().dim) throw Error("velocity model and grid dimensions differ");
  if (phi_.weight().size() != spectral_->grid().size()) throw Error("test functional weight does not match grid");
  nm_ = noise_->num_modes();
  trace_ = trace_field(*noise_);

  for (std::size_t j = 0; j < nm_; ++j) {
    const auto& chain = noise_->chain(j);
    Eigen::VectorXd s = Eigen::Map<const Eigen::VectorXd>(chain.states().data(), Eigen::Index(chain.size()));
    resolvent_s_.push_back(resolvent(chain.generator(), s));
    resolvent_phi_.push_back(resolvent(chain.generator(), noise_->poisson_identity(j)));
  }

  psi_.resize(nm_ * nm_);
  for (std::size_t j = 0; j < nm_; ++j) {
    const auto& cj = noise_->chain(j);
    Eigen::VectorXd sj = Eigen::Map<const Eigen::VectorXd>(cj.states().data(), Eigen::Index(cj.size()));
    for (std::size_t k = 0; k < nm_; ++k) {
      const auto& ck = noise_->chain(k);
      const Eigen::VectorXd& phik = noise_->poisson_identity(k);
      if (j == k) {
        Eigen::VectorXd theta = sj.cwiseProduct(phik);
        psi_[j * nm_ + k] = solve_poisson(cj, -theta);
        continue;
      }
      const std::size_t size = cj.size() * ck.size();
      if (size > kPairBudget) {
        std::ostringstream os;
        os << "pairwise Poisson solve for noise modes (" << j << ", " << k << ") needs " << size
           << " product states, budget is " << kPairBudget;
        throw Error(os.str());
      }
      const auto sk = Eigen::Index(ck.size());
      Eigen::MatrixXd g = kron(cj.generator(), Eigen::MatrixXd::Identity(sk, sk)) +
                          kron(Eigen::MatrixXd::Identity(Eigen::Index(cj.size()), Eigen::Index(cj.size())),
                               ck.generator());
      Eigen::VectorXd pi(static_cast<Eigen::Index>(size)), theta(static_cast<Eigen::Index>(size));
      for (Eigen::Index a = 0; a < Eigen::Index(cj.size()); ++a)
        for (Eigen::Index b = 0; b < sk; ++b) {
          pi(a * sk + b) = cj.stationary_law()(a) * ck.stationary_law()(b);
          theta(a * sk + b) = sj(a) * phik(b);
        }
      psi_[j * nm_ + k] = solve_poisson(g, pi, -theta);
    }
  }
}

void PerturbedTestFunction::apply_A(const KineticField& f, KineticField& out) const {
  for (std::size_t i = 0; i < velocity_.size(); ++i)
    spectral_->directional_derivative(f.velocity(i), velocity_.velocities[i], out.velocity(i));
}

GridFunction PerturbedTestFunction::average_A(const KineticField& f) const {
  KineticField af(f.grid(), f.nvel());
  apply_A(f, af);
  return average(velocity_, af);
}

GridFunction PerturbedTestFunction::average_A2(const KineticField& f) const {
  KineticField af(f.grid(), f.nvel());
  apply_A(f, af);
  KineticField a2f(f.grid(), f.nvel());
  apply_A(af, a2f);
  return average(velocity_, a2f);
}

GridFunction PerturbedTestFunction::average_A_times(const KineticField& f, const GridFunction& m) const {
  KineticField fm = f;
  for (std::size_t i = 0; i < fm.nvel(); ++i) {
    auto fi = fm.velocity(i);
    for (std::size_t p = 0; p < m.size(); ++p) fi[p] *= m[p];
  }
  return average_A(fm);
}

GridFunction PerturbedTestFunction::diffusion_operator(std::span<const double> rho) const {
  const Grid& grid = spectral_->grid();
  if (rho.size() != grid.size()) throw Error("density does not match grid");
  return average_A2(KineticField::from_density(grid, velocity_.size(), rho));
}

PerturbedTestFunction::Frame PerturbedTestFunction::make_frame(const KineticField& f) const {
  if (!(f.grid() == spectral_->grid()) || f.nvel() != velocity_.size())
    throw Error("kinetic field does not match velocity model or grid");
  Frame fr;
  fr.f = &f;
  fr.rho = average(velocity_, f);
  fr.u = f;
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    auto ui = fr.u.velocity(i);
    for (std::size_t p = 0; p < fr.rho.size(); ++p) ui[p] -= fr.rho[p];
  }
  fr.g = phi_.gradient(fr.rho);
  fr.au = average_A(fr.u);
  fr.a2u = average_A2(fr.u);
  return fr;
}

PerturbedTestFunction::NoiseFrame PerturbedTestFunction::make_noise_frame(const Frame& fr,
                                                                          const NoiseState& n) const {
  NoiseFrame nf;
  nf.n = &n;
  nf.m = noise_field(*noise_, n);
  nf.m1 = m_inverse_field(*noise_, n);
  nf.mt = noise_->combine(n, resolvent_s_);
  nf.mt1 = noise_->combine(n, resolvent_phi_);
  nf.aumt = average_A_times(fr.u, nf.mt);
  return nf;
}

double PerturbedTestFunction::phi1(const Frame& fr, const NoiseFrame& nf) const {
  return -inner(fr.au, fr.g) - inner(times(fr.rho, nf.m1), fr.g);
}

double PerturbedTestFunction::phi2_sharp(const Frame& fr) const {
  return inner(fr.a2u, fr.g) + 0.5 * hess(fr.au, fr.au);
}

double PerturbedTestFunction::phi2_mixed(const Frame& fr, const NoiseFrame& nf) const {
  return -inner(nf.aumt, fr.g) - hess(fr.au, times(fr.rho, nf.mt)) + inner(times(fr.au, nf.mt1), fr.g) +
         hess(times(fr.rho, nf.mt1), fr.au);
}

double PerturbedTestFunction::pair_value(std::size_t j, std::size_t k, const NoiseState& n) const {
  const auto& table = psi_[j * nm_ + k];
  if (j == k) return table(n[j]);
  return table(Eigen::Index(n[j]) * Eigen::Index(noise_->chain(k).size()) + n[k]);
}

double PerturbedTestFunction::phi2_random(const Frame& fr, const NoiseState& n) const {
  double total = 0.0;
  for (std::size_t j = 0; j < nm_; ++j) {
    const GridFunction rho_j = times(fr.rho, noise_->mode(j));
    for (std::size_t k = 0; k < nm_; ++k) {
      const double psi = pair_value(j, k, n);
      if (psi == 0.0) continue;
      const GridFunction rho_k = times(fr.rho, noise_->mode(k));
      const double b = -inner(times(rho_j, noise_->mode(k)), fr.g) - hess(rho_k, rho_j);
      total += b * psi;
    }
  }
  return total;
}

double PerturbedTestFunction::phi2(const Frame& fr, const NoiseFrame& nf) const {
  return phi2_sharp(fr) + phi2_mixed(fr, nf) + phi2_random(fr, *nf.n);
}

double PerturbedTestFunction::d_phi(const Frame& fr, const KineticField& h) const {
  return inner(average(velocity_, h), fr.g);
}

double PerturbedTestFunction::d_phi1(const Frame& fr, const NoiseFrame& nf, const KineticField& h) const {
  const GridFunction hbar = average(velocity_, h);
  const GridFunction ah = average_A(h);
  return -inner(ah, fr.g) - hess(fr.au, hbar) - inner(times(hbar, nf.m1), fr.g) - hess(times(fr.rho, nf.m1), hbar);
}

double PerturbedTestFunction::d_phi2(const Frame& fr, const NoiseFrame& nf, const KineticField& h) const {
  const GridFunction hbar = average(velocity_, h);
  KineticField hu = h;
  for (std::size_t i = 0; i < hu.nvel(); ++i) {
    auto hi = hu.velocity(i);
    for (std::size_t p = 0; p < hbar.size(); ++p) hi[p] -= hbar[p];
  }
  const GridFunction ah = average_A(h);
  const GridFunction a2hu = average_A2(hu);

  const double sharp = inner(a2hu, fr.g) + hess(fr.a2u, hbar) + hess(fr.au, ah);

  const double mixed = -inner(average_A_times(hu, nf.mt), fr.g) - hess(nf.aumt, hbar) -
                       hess(ah, times(fr.rho, nf.mt)) - hess(fr.au, times(hbar, nf.mt)) +
                       inner(times(ah, nf.mt1), fr.g) + hess(times(fr.au, nf.mt1), hbar) +
                       hess(times(hbar, nf.mt1), fr.au) + hess(times(fr.rho, nf.mt1), ah);

  double random = 0.0;
  for (std::size_t j = 0; j < nm_; ++j) {
    const auto& ej = noise_->mode(j);
    for (std::size_t k = 0; k < nm_; ++k) {
      const double psi = pair_value(j, k, *nf.n);
      if (psi == 0.0) continue;
      const auto& ek = noise_->mode(k);
      const GridFunction ejk = times(ej, ek);
      const double db = -inner(times(hbar, ejk), fr.g) - hess(times(fr.rho, ejk), hbar) -
                        hess(times(hbar, ek), times(fr.rho, ej)) - hess(times(fr.rho, ek), times(hbar, ej));
      random += psi * db;
    }
  }
  return sharp + mixed + random;
}

double PerturbedTestFunction::apply_generator(const std::function<double(const NoiseState&)>& psi,
                                              const NoiseState& n) const {
  if (n.size() != nm_) throw Error("noise state does not match model");
  const double here = psi(n);
  double total = 0.0;
  NoiseState other = n;
  for (std::size_t j = 0; j < nm_; ++j) {
    const auto& g = noise_->chain(j).generator();
    for (Eigen::Index l = 0; l < g.cols(); ++l) {
      if (l == n[j] || g(n[j], l) == 0.0) continue;
      other[j] = int(l);
      total += g(n[j], l) * (psi(other) - here);
    }
    other[j] = n[j];
  }
  return total;
}

double PerturbedTestFunction::phi(const KineticField& f) const { return phi_.value(average(velocity_, f)); }

double PerturbedTestFunction::corrector1(const KineticField& f, const NoiseState& n) const {
  const Frame fr = make_frame(f);
  return phi1(fr, make_noise_frame(fr, n));
}

Corrector2Parts PerturbedTestFunction::corrector2_parts(const KineticField& f, const NoiseState& n) const {
  const Frame fr = make_frame(f);
  const NoiseFrame nf = make_noise_frame(fr, n);
  return {phi2_sharp(fr), phi2_mixed(fr, nf), phi2_random(fr, n)};
}

double PerturbedTestFunction::value(const KineticField& f, const NoiseState& n, double epsilon) const {
  const Frame fr = make_frame(f);
  const NoiseFrame nf = make_noise_frame(fr, n);
  return phi_.value(fr.rho) + epsilon * phi1(fr, nf) + epsilon * epsilon * phi2(fr, nf);
}

GeneratorTerms PerturbedTestFunction::generator_terms(const KineticField& f, const NoiseState& n) const {
  const Frame fr = make_frame(f);
  const NoiseFrame nf = make_noise_frame(fr, n);

  // Lf = ρ − f = −u.
  KineticField lf = fr.u;
  for (double& x : lf.values()) x = -x;
  // h_A = −Af + f·m.
  KineticField ha(f.grid(), f.nvel());
  apply_A(f, ha);
  for (std::size_t i = 0; i < f.nvel(); ++i) {
    auto hi = ha.velocity(i);
    auto fi = f.velocity(i);
    for (std::size_t p = 0; p < hi.size(); ++p) hi[p] = -hi[p] + fi[p] * nf.m[p];
  }

  auto phi1_at = [&](const NoiseState& s) { return phi1(fr, make_noise_frame(fr, s)); };
  auto phi2_at = [&](const NoiseState& s) { return phi2(fr, make_noise_frame(fr, s)); };

  GeneratorTerms t;
  t.minus2 = d_phi(fr, lf);
  t.minus1 = d_phi1(fr, nf, lf) + apply_generator(phi1_at, n) + d_phi(fr, ha);
  t.zero = d_phi2(fr, nf, lf) + apply_generator(phi2_at, n) + d_phi1(fr, nf, ha);
  t.one = d_phi2(fr, nf, ha);
  return t;
}

double PerturbedTestFunction::generator_limit(std::span<const double> rho) const {
  const GridFunction g = phi_.gradient(rho);
  const GridFunction div = diffusion_operator(rho);
  double out = inner(div, g) + 0.5 * inner(times(trace_, rho), g);
  if (phi_.kind() == FunctionalKind::Linear) return out;
  for (std::size_t j = 0; j < nm_; ++j) {
    const GridFunction r = times(rho, noise_->mode(j));
    out += 0.5 * noise_->autocovariance(j) * hess(r, r);
  }
  return out;
}

double PerturbedTestFunction::bracket_rate(const KineticField& f, const NoiseState& n, double epsilon) const {
  const Frame fr = make_frame(f);
  auto corr = [&](const NoiseState& s) {
    const NoiseFrame nf = make_noise_frame(fr, s);
    return phi1(fr, nf) + epsilon * phi2(fr, nf);
  };
  const double here = corr(n);
  double total = 0.0;
  NoiseState other = n;
  for (std::size_t j = 0; j < nm_; ++j) {
    const auto& g = noise_->chain(j).generator();
    for (Eigen::Index l = 0; l < g.cols(); ++l) {
      if (l == n[j] || g(n[j], l) == 0.0) continue;
      other[j] = int(l);
      const double d = corr(other) - here;
      total += g(n[j], l) * d * d;
    }
    other[j] = n[j];
  }
  return total;
}

double PerturbedTestFunction::leading_bracket_rate(const KineticField& f, const NoiseState& n) const {
  const Frame fr = make_frame(f);
  auto p1 = [&](const NoiseState& s) { return phi1(fr, make_noise_frame(fr, s)); };
  auto p1sq = [&](const NoiseState& s) {
    const double v = p1(s);
    return v * v;
  };
  return apply_generator(p1sq, n) - 2.0 * p1(n) * apply_generator(p1, n);
}

MartingaleTracker::MartingaleTracker(std::vector<const PerturbedTestFunction*> functionals, double epsilon,
                                     bool track_bracket)
    : fns_(std::move(functionals)), epsilon_(epsilon), track_bracket_(track_bracket) {
  const std::size_t k = fns_.size();
  initial_.assign(k, 0.0);
  integral_.assign(k, 0.0);
  bracket_integral_.assign(k, 0.0);
  left_gen_.assign(k, 0.0);
  left_br_.assign(k, 0.0);
  right_gen_.assign(k, 0.0);
  right_br_.assign(k, 0.0);
  residual_.assign(k, {});
  bracket_.assign(k, {});
}

void MartingaleTracker::evaluate(const KineticField& f, const NoiseState& n, std::vector<double>& gen,
                                 std::vector<double>& br) const {
  for (std::size_t k = 0; k < fns_.size(); ++k) {
    gen[k] = fns_[k]->generator_eps(f, n, epsilon_);
    br[k] = track_bracket_ ? fns_[k]->bracket_rate(f, n, epsilon_) : 0.0;
  }
}

void MartingaleTracker::on_start(double t, const KineticField& f, const NoiseState& n) {
  t_left_ = t;
  for (std::size_t k = 0; k < fns_.size(); ++k) {
    initial_[k] = fns_[k]->value(f, n, epsilon_);
    integral_[k] = bracket_integral_[k] = 0.0;
    residual_[k].clear();
    bracket_[k].clear();
  }
  evaluate(f, n, left_gen_, left_br_);
}

void MartingaleTracker::on_interval_end(double t, const KineticField& f, const NoiseState& n) {
  evaluate(f, n, right_gen_, right_br_);
  const double h = t - t_left_;
  for (std::size_t k = 0; k < fns_.size(); ++k) {
    integral_[k] += 0.5 * h * (left_gen_[k] + right_gen_[k]);
    bracket_integral_[k] += 0.5 * h * (left_br_[k] + right_br_[k]);
  }
  // Until a jump, the next interval starts from this state.
  std::swap(left_gen_, right_gen_);
  std::swap(left_br_, right_br_);
  t_left_ = t;
}

void MartingaleTracker::on_jump(double t, const KineticField& f, const NoiseState& n) {
  evaluate(f, n, left_gen_, left_br_);
  t_left_ = t;
}

void MartingaleTracker::on_output(std::size_t /*index*/, double /*t*/, const KineticField& f, const NoiseState& n) {
  for (std::size_t k = 0; k < fns_.size(); ++k) {
    residual_[k].push_back(fns_[k]->value(f, n, epsilon_) - initial_[k] - integral_[k]);
    bracket_[k].push_back(bracket_integral_[k]);
  }
}

std::vector<MartingaleCheckpoint> martingale_residual(const std::vector<std::vector<double>>& samples,
                                                      const std::vector<double>& times) {
  if (samples.size() < kMinMartingaleTrajectories) {
    std::ostringstream os;
    os << "martingale check needs at least " << kMinMartingaleTrajectories << " trajectories, got "
       << samples.size();
    throw Error(os.str());
  }
  std::vector<RunningStats> stats(times.size());
  for (const auto& row : samples) {
    if (row.size() != times.size()) throw Error("martingale sample does not match checkpoint count");
    for (std::size_t i = 0; i < row.size(); ++i) stats[i].push(row[i]);
  }
  std::vector<MartingaleCheckpoint> out;
  for (std::size_t i = 0; i < times.size(); ++i) {
    MartingaleCheckpoint c;
    c.time = times[i];
    c.mean = stats[i].mean();
    c.stderr_of_mean = stats[i].stderr_of_mean();
    c.count = stats[i].count();
    c.within_band = std::abs(c.mean) <= 3.0 * c.stderr_of_mean;
    out.push_back(c);
  }
  return out;
}

}  // namespace kinlim
