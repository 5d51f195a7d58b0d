#pragma once

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "kinlim/config.hpp"
#include "kinlim/generator.hpp"
#include "kinlim/kinetic_solver.hpp"
#include "kinlim/spde_solver.hpp"
#include "kinlim/stats.hpp"

namespace kinlim {

/// Trajectories are processed in fixed blocks; each block is reduced in
/// trajectory order and blocks are merged in index order, so results do not
/// depend on the number of workers.
inline constexpr std::size_t kBlockSize = 32;
/// Fraction of failed trajectories above which an ensemble aborts.
inline constexpr double kMaxFailureFraction = 0.01;

/// Runs fn(block_index, begin, end) for every block of [0, count) on up to
/// `workers` threads and returns the per-block results in block order.
template <class Partial, class Fn>
std::vector<Partial> run_blocks(std::size_t count, std::size_t workers, Fn fn) {
  const std::size_t blocks = (count + kBlockSize - 1) / kBlockSize;
  std::vector<Partial> out(blocks);
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    while (true) {
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        out[b] = fn(b, b * kBlockSize, std::min(count, (b + 1) * kBlockSize));
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(blocks);
      }
    }
  };
  workers = std::max<std::size_t>(1, std::min(workers, blocks));
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return out;
}

/// Per-time mean of a density field, summed in a fixed order.
struct FieldMean {
  std::size_t count = 0;
  std::vector<GridFunction> sum;

  void add(const std::vector<GridFunction>& fields);
  void merge(const FieldMean& other);
  GridFunction mean(std::size_t time) const;
};

inline const std::string kNorm2Key = "|f|^2";
inline const std::string kNorm4Key = "|f|^4";

struct KineticEnsemble {
  double epsilon = 0.0;
  std::size_t epsilon_index = 0;
  /// Keys: functional ids plus kNorm2Key / kNorm4Key, one entry per output time.
  EnsembleStats stats;
  FieldMean density;
  std::size_t trajectories = 0;
  std::size_t gronwall_checks = 0;
  std::size_t gronwall_violations = 0;
  double gronwall_max_ratio = 0.0;
  double initial_norm_squared = 0.0;
};

struct LimitEnsemble {
  EnsembleStats stats;  // epsilon index 0
  FieldMean density;
  std::size_t trajectories = 0;
};

KineticEnsemble run_kinetic_ensemble(const Experiment& exp, std::size_t epsilon_index, std::size_t trajectories,
                                     std::size_t workers);
LimitEnsemble run_limit_ensemble(const Experiment& exp, std::size_t trajectories, std::size_t workers);

struct MomentCheck {
  double sup_second = 0.0;   // sup_{ε,t} E‖f‖²
  double sup_fourth = 0.0;   // sup_{ε,t} E‖f‖⁴
  double bound_second = 0.0; // threshold·‖f₀‖²
  double bound_fourth = 0.0; // (threshold·‖f₀‖²)²
  /// sup_t E‖f^ε(t)‖² per ε, in ensemble order (trend report only).
  std::vector<double> per_epsilon;
  bool passed = false;
  std::string message;
};

MomentCheck uniform_moment_check(const std::vector<KineticEnsemble>& ensembles, const std::vector<double>& times,
                                 double threshold);

struct ConvergenceReport {
  std::vector<KineticEnsemble> kinetic;
  LimitEnsemble limit;
  WeakErrorTable table;  // at final time
  /// H^{−η} distance between ensemble-mean densities at final time, per ε.
  std::vector<double> sobolev;
  MomentCheck moments;
  std::size_t failures = 0;
};

/// Full ε sweep plus the limit ensemble.
ConvergenceReport run_ensemble(const Experiment& exp, std::size_t workers);

struct NoiseStatsRow {
  std::size_t mode = 0;
  double c_analytic = 0.0;
  double c_empirical = 0.0;
  double stderr_of_mean = 0.0;
};

/// c_j estimated as E[(∫_0^τ m_j dt)²]/τ over stationary paths.
NoiseStatsRow estimate_autocovariance(const ChainSpec& chain, std::size_t mode, double tau, std::size_t paths,
                                      std::uint64_t seed);

struct MartingaleEnsemble {
  std::vector<double> times;
  /// Per functional: ensemble summary at each checkpoint.
  std::vector<std::vector<MartingaleCheckpoint>> checkpoints;
  /// Per functional and checkpoint: statistics of M(t)² − ⟨M⟩_t (mean zero).
  std::vector<std::vector<RunningStats>> bracket_gap;
  std::size_t gronwall_violations = 0;
  std::size_t gronwall_checks = 0;
};

MartingaleEnsemble run_martingale_ensemble(const Experiment& exp, double epsilon, std::size_t trajectories,
                                           const std::vector<double>& checkpoints, std::size_t workers);

struct GeneratorRow {
  double epsilon = 0.0;
  std::string functional;
  double residual_mean = 0.0;
  double residual_stderr = 0.0;
  /// Median over states of residual(previous ε)/residual(ε); NaN for the first ε.
  double scaling_ratio = 0.0;
};

/// Normalized residual |ℒ^εφ^ε − ℒφ|/(1 + ‖f‖²) over random smooth states.
std::vector<GeneratorRow> diagnose_generator(const Experiment& exp, std::size_t states, std::uint64_t seed);

/// Random smooth kinetic state: low Fourier modes per velocity around `offset`.
KineticField random_smooth_state(const Grid& grid, std::size_t nvel, RngStream& rng, double offset = 1.0);

/// CSV helpers: header row, then rows of values printed with 17 significant digits.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
std::string format_number(double x);

/// run_manifest.json: config echo, seed, versions, workers and failure counts.
void write_manifest(const std::filesystem::path& dir, const Experiment& exp, const std::string& command,
                    std::size_t workers, const nlohmann::json& extra);

}  // namespace kinlim
