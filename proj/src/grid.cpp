#include "kinlim/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <mutex>
#include <numbers>
#include <numeric>

namespace kinlim {

namespace {
// FFTW's planner is not re-entrant; execution on an existing plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Grid::Grid(int dim_, int n_) : dim(dim_), n(n_) {
  if (dim != 1 && dim != 2) throw Error("grid dimension must be 1 or 2");
  if (!is_power_of_two(n) || n < 2) throw Error("grid size must be a power of two >= 2");
}

std::array<double, 2> Grid::point(std::size_t p) const {
  if (dim == 1) return {double(p) / n, 0.0};
  return {double(p / n) / n, double(p % n) / n};
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

double inner(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("inner product of mismatched grid functions");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s / double(a.size());
}

double mean(std::span<const double> a) {
  return std::accumulate(a.begin(), a.end(), 0.0) / double(a.size());
}

double l2_norm(std::span<const double> a) { return std::sqrt(inner(a, a)); }

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double x : a) m = std::max(m, std::abs(x));
  return m;
}

GridFunction fourier_mode(const Grid& grid, Trig trig, WaveVector k) {
  GridFunction out(grid.size());
  for (std::size_t p = 0; p < out.size(); ++p) {
    auto x = grid.point(p);
    double phase = 2.0 * std::numbers::pi * (k[0] * x[0] + (grid.dim == 2 ? k[1] * x[1] : 0.0));
    out[p] = trig == Trig::Cos ? std::cos(phase) : std::sin(phase);
  }
  return out;
}

GridFunction constant_function(const Grid& grid, double value) {
  return GridFunction(grid.size(), value);
}

Spectral::Spectral(Grid grid) : grid_(grid) {
  const int n = grid_.n;
  const int half = n / 2 + 1;
  spectral_size_ = grid_.dim == 1 ? std::size_t(half) : std::size_t(n) * half;
  wave_.resize(spectral_size_);
  mult_.resize(spectral_size_);
  for (std::size_t s = 0; s < spectral_size_; ++s) {
    int last = int(s % half);
    int first = grid_.dim == 1 ? 0 : int(s / half);
    if (first > n / 2) first -= n;
    wave_[s] = grid_.dim == 1 ? WaveVector{last, 0} : WaveVector{first, last};
    mult_[s] = (last == 0 || last == n / 2) ? 1.0 : 2.0;
  }

  std::vector<double> real(grid_.size());
  std::vector<Complex> cplx(spectral_size_);
  auto* rp = real.data();
  auto* cp = reinterpret_cast<fftw_complex*>(cplx.data());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  std::lock_guard lock(planner_mutex());
  if (grid_.dim == 1) {
    forward_plan_ = fftw_plan_dft_r2c_1d(n, rp, cp, flags);
    inverse_plan_ = fftw_plan_dft_c2r_1d(n, cp, rp, flags | FFTW_DESTROY_INPUT);
  } else {
    forward_plan_ = fftw_plan_dft_r2c_2d(n, n, rp, cp, flags);
    inverse_plan_ = fftw_plan_dft_c2r_2d(n, n, cp, rp, flags | FFTW_DESTROY_INPUT);
  }
  if (!forward_plan_ || !inverse_plan_) throw Error("FFTW planning failed");
}

Spectral::~Spectral() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

void Spectral::forward(std::span<const double> in, std::span<Complex> out) const {
  if (in.size() != grid_.size() || out.size() != spectral_size_) throw Error("spectral size mismatch");
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
}

void Spectral::inverse(std::span<Complex> in, std::span<double> out) const {
  if (out.size() != grid_.size() || in.size() != spectral_size_) throw Error("spectral size mismatch");
  fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), reinterpret_cast<fftw_complex*>(in.data()),
                       out.data());
  const double scale = 1.0 / double(grid_.size());
  for (double& x : out) x *= scale;
}

bool Spectral::nyquist(std::size_t slot, int c) const {
  if (c >= grid_.dim) return false;
  return std::abs(wave_[slot][c]) == grid_.n / 2;
}

void Spectral::directional_derivative(std::span<const double> in, std::array<double, 2> dir,
                                      std::span<double> out) const {
  std::vector<Complex> hat(spectral_size_);
  forward(in, hat);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t s = 0; s < spectral_size_; ++s) {
    double k = 0.0;
    bool drop = false;
    for (int c = 0; c < grid_.dim; ++c) {
      if (dir[c] == 0.0) continue;
      if (nyquist(s, c)) drop = true;
      k += dir[c] * wave_[s][c];
    }
    hat[s] = drop ? Complex{} : hat[s] * Complex(0.0, two_pi * k);
  }
  inverse(hat, out);
}

}  // namespace kinlim
