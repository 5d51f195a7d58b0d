#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "kinlim/grid.hpp"

namespace kinlim {

/// Streaming mean/variance (Welford) with the pairwise merge of Chan et al.
class RunningStats {
 public:
  void push(double x);
  void merge(const RunningStats& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance; 0 for fewer than two samples.
  double variance() const { return n_ > 1 ? m2_ / double(n_ - 1) : 0.0; }
  double stderr_of_mean() const;
  double m2() const { return m2_; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

struct StatsKey {
  std::size_t epsilon_index;
  std::string functional;
  std::size_t time_index;

  friend bool operator<(const StatsKey& a, const StatsKey& b) {
    return std::tie(a.epsilon_index, a.functional, a.time_index) <
           std::tie(b.epsilon_index, b.functional, b.time_index);
  }
};

/// Per (ε, functional, time) running statistics.
struct EnsembleStats {
  std::map<StatsKey, RunningStats> entries;
  std::size_t failures = 0;

  RunningStats& at(std::size_t eps, const std::string& functional, std::size_t time) {
    return entries[{eps, functional, time}];
  }
  const RunningStats* find(std::size_t eps, const std::string& functional, std::size_t time) const;
  void merge(const EnsembleStats& other);
};

struct WeakErrorRow {
  std::string functional;
  double epsilon = 0.0;
  double kinetic_mean = 0.0;
  double limit_mean = 0.0;
  double error = 0.0;
  /// Half-width 3·sqrt(se_kin² + se_lim²).
  double ci = 0.0;
  /// error / error at the previous ε (NaN on the first row of a functional).
  double ratio = 0.0;
};

struct WeakErrorTable {
  std::vector<WeakErrorRow> rows;
  /// Per functional: "consistent with convergence", "inconclusive, increase
  /// ensemble" or "not consistent with convergence".
  std::map<std::string, std::string> verdicts;
};

inline constexpr const char* kVerdictConsistent = "consistent with convergence";
inline constexpr const char* kVerdictInconclusive = "inconclusive, increase ensemble";
inline constexpr const char* kVerdictInconsistent = "not consistent with convergence";

/// Weak errors at one time index. `kinetic` holds ε-indexed entries,
/// `limit` the reference (its ε index is ignored: entry 0 is used).
WeakErrorTable weak_error_table(const EnsembleStats& kinetic, const EnsembleStats& limit,
                                const std::vector<double>& epsilons, const std::vector<std::string>& functionals,
                                std::size_t time_index);

/// Spectral H^{−η} distance sqrt(Σ_ξ (1 + (2π|ξ|)²)^{−η} |ρ̂₁ − ρ̂₂|²), with ρ̂
/// normalized so η = 0 gives the discrete L² distance.
double sobolev_distance(const Spectral& spectral, std::span<const double> a, std::span<const double> b,
                        double eta);

}  // namespace kinlim
