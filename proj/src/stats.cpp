#include "kinlim/stats.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace kinlim {

void RunningStats::push(double x) {
  ++n_;
  const double delta = x - mean_;
  mean_ += delta / double(n_);
  m2_ += delta * (x - mean_);
}

void RunningStats::merge(const RunningStats& other) {
  if (other.n_ == 0) return;
  if (n_ == 0) {
    *this = other;
    return;
  }
  const double na = double(n_), nb = double(other.n_), n = na + nb;
  const double delta = other.mean_ - mean_;
  mean_ += delta * nb / n;
  m2_ += other.m2_ + delta * delta * na * nb / n;
  n_ += other.n_;
}

double RunningStats::stderr_of_mean() const {
  return n_ > 1 ? std::sqrt(variance() / double(n_)) : std::numeric_limits<double>::infinity();
}

const RunningStats* EnsembleStats::find(std::size_t eps, const std::string& functional, std::size_t time) const {
  auto it = entries.find({eps, functional, time});
  return it == entries.end() ? nullptr : &it->second;
}

void EnsembleStats::merge(const EnsembleStats& other) {
  for (const auto& [key, s] : other.entries) entries[key].merge(s);
  failures += other.failures;
}

WeakErrorTable weak_error_table(const EnsembleStats& kinetic, const EnsembleStats& limit,
                                const std::vector<double>& epsilons, const std::vector<std::string>& functionals,
                                std::size_t time_index) {
  if (epsilons.size() < 2) throw Error("weak error table needs at least two epsilon values");
  WeakErrorTable table;
  for (const auto& id : functionals) {
    const RunningStats* lim = limit.find(0, id, time_index);
    if (!lim) throw Error("limit statistics missing for functional " + id);
    std::vector<WeakErrorRow> rows;
    for (std::size_t e = 0; e < epsilons.size(); ++e) {
      const RunningStats* kin = kinetic.find(e, id, time_index);
      if (!kin) throw Error("kinetic statistics missing for functional " + id);
      WeakErrorRow row;
      row.functional = id;
      row.epsilon = epsilons[e];
      row.kinetic_mean = kin->mean();
      row.limit_mean = lim->mean();
      row.error = std::abs(kin->mean() - lim->mean());
      const double se_k = kin->count() > 1 ? kin->stderr_of_mean() : 0.0;
      const double se_l = lim->count() > 1 ? lim->stderr_of_mean() : 0.0;
      row.ci = 3.0 * std::hypot(se_k, se_l);
      row.ratio = rows.empty() ? std::numeric_limits<double>::quiet_NaN()
                               : (rows.back().error > 0.0 ? row.error / rows.back().error : 1.0);
      rows.push_back(row);
    }
    const auto& first = rows.front();
    const auto& last = rows.back();
    std::string verdict = kVerdictInconclusive;
    if (first.error - last.error > first.ci + last.ci)
      verdict = kVerdictConsistent;
    else if (last.error - first.error > first.ci + last.ci)
      verdict = kVerdictInconsistent;
    table.verdicts[id] = verdict;
    table.rows.insert(table.rows.end(), rows.begin(), rows.end());
  }
  return table;
}

double sobolev_distance(const Spectral& spectral, std::span<const double> a, std::span<const double> b,
                        double eta) {
  const std::size_t npts = spectral.grid().size();
  if (a.size() != npts || b.size() != npts) throw Error("sobolev distance: grid mismatch");
  if (!(eta >= 0.0)) throw Error("sobolev distance: eta must be nonnegative");
  std::vector<double> diff(npts);
  for (std::size_t p = 0; p < npts; ++p) diff[p] = a[p] - b[p];
  std::vector<Complex> hat(spectral.spectral_size());
  spectral.forward(diff, hat);
  const double two_pi = 2.0 * std::numbers::pi;
  double sum = 0.0;
  for (std::size_t s = 0; s < hat.size(); ++s) {
    const auto k = spectral.wavevector(s);
    const double k2 = double(k[0]) * k[0] + double(k[1]) * k[1];
    const double weight = std::pow(1.0 + two_pi * two_pi * k2, -eta);
    sum += spectral.multiplicity(s) * weight * std::norm(hat[s]);
  }
  // Parseval: Σ|f̂|² over all ξ = npts · Σ f², and the grid L² norm is the mean.
  return std::sqrt(sum) / double(npts);
}

}  // namespace kinlim
