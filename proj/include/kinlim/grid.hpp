#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinlim {

/// Raised for contract violations and invalid models.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Uniform periodic grid on the unit torus [0,1)^d with n points per
/// dimension. Points are x_i = i/n; storage is row-major over dimensions.
struct Grid {
  int dim = 1;
  int n = 0;

  Grid() = default;
  Grid(int dim_, int n_);

  std::size_t size() const { return dim == 1 ? std::size_t(n) : std::size_t(n) * std::size_t(n); }
  double spacing() const { return 1.0 / n; }
  /// Coordinates of flat point index p.
  std::array<double, 2> point(std::size_t p) const;

  friend bool operator==(const Grid&, const Grid&) = default;
};

using GridFunction = std::vector<double>;
using Complex = std::complex<double>;
using WaveVector = std::array<int, 2>;

bool is_power_of_two(int n);

/// Quadrature inner product (1/|grid|) Σ a·b, the discrete L²(𝕋ᵈ) pairing.
double inner(std::span<const double> a, std::span<const double> b);
double mean(std::span<const double> a);
double l2_norm(std::span<const double> a);
double max_abs(std::span<const double> a);

/// Real Fourier mode cos(2πk·x) or sin(2πk·x) sampled on the grid.
enum class Trig { Cos, Sin };
GridFunction fourier_mode(const Grid& grid, Trig trig, WaveVector k);
GridFunction constant_function(const Grid& grid, double value);

/// Real-to-complex spectral transform on a Grid, backed by FFTW.
///
/// The forward transform is unnormalized; inverse() divides by the number of
/// grid points so that inverse(forward(f)) == f. Coefficients are stored in
/// the half-complex layout of FFTW (last dimension truncated to n/2+1).
/// Instances are immutable after construction and safe to use concurrently.
class Spectral {
 public:
  explicit Spectral(Grid grid);
  ~Spectral();
  Spectral(const Spectral&) = delete;
  Spectral& operator=(const Spectral&) = delete;

  const Grid& grid() const { return grid_; }
  std::size_t spectral_size() const { return spectral_size_; }

  void forward(std::span<const double> in, std::span<Complex> out) const;
  /// Overwrites `in` as scratch.
  void inverse(std::span<Complex> in, std::span<double> out) const;

  /// Signed integer wave vector of spectral slot `slot`.
  WaveVector wavevector(std::size_t slot) const { return wave_[slot]; }
  /// True when component `c` of the slot's wave vector sits at ±n/2.
  bool nyquist(std::size_t slot, int c) const;
  /// Hermitian multiplicity of a slot in the half-complex layout (1 or 2),
  /// used for Parseval sums.
  double multiplicity(std::size_t slot) const { return mult_[slot]; }

  /// Spectral x-derivative along direction `dir` (∑ dir_c ∂_c), Nyquist
  /// components dropped.
  void directional_derivative(std::span<const double> in, std::array<double, 2> dir,
                              std::span<double> out) const;

 private:
  Grid grid_;
  std::size_t spectral_size_ = 0;
  std::vector<WaveVector> wave_;
  std::vector<double> mult_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

using SpectralPtr = std::shared_ptr<const Spectral>;

}  // namespace kinlim
