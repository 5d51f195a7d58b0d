#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "kinlim/stats.hpp"
#include "support.hpp"

using namespace kinlim;

TEST(RunningStats, MatchesTwoPassFormulas) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(3.0, 2.0);
  std::vector<double> x(1000);
  RunningStats s;
  for (double& v : x) {
    v = normal(rng);
    s.push(v);
  }
  double m = 0.0;
  for (double v : x) m += v;
  m /= double(x.size());
  double var = 0.0;
  for (double v : x) var += (v - m) * (v - m);
  var /= double(x.size() - 1);
  EXPECT_NEAR(s.mean(), m, 1e-12);
  EXPECT_NEAR(s.variance(), var, 1e-10);
  EXPECT_NEAR(s.stderr_of_mean(), std::sqrt(var / 1000.0), 1e-12);
}

TEST(RunningStats, MergeIsAssociativeAndCommutative) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal;
  RunningStats a, b, c, all;
  for (int i = 0; i < 300; ++i) {
    double v = normal(rng) * (1 + i % 7);
    all.push(v);
    (i < 50 ? a : i < 170 ? b : c).push(v);
  }
  RunningStats left = a;
  left.merge(b);
  left.merge(c);
  RunningStats bc = b;
  bc.merge(c);
  RunningStats right = a;
  right.merge(bc);
  RunningStats swapped = c;
  swapped.merge(a);
  swapped.merge(b);
  for (const auto* s : {&left, &right, &swapped}) {
    EXPECT_EQ(s->count(), all.count());
    EXPECT_NEAR(s->mean(), all.mean(), 1e-12 * std::abs(all.mean()) + 1e-15);
    EXPECT_NEAR(s->m2(), all.m2(), 1e-12 * all.m2());
  }
}

TEST(RunningStats, StderrShrinksLikeInverseRoot) {
  // Doubling the sample size divides the standard error by √2 (within 20%).
  std::mt19937_64 rng(3);
  std::normal_distribution<double> normal;
  RunningStats small, large;
  for (int i = 0; i < 20000; ++i) {
    double v = normal(rng);
    if (i < 10000) small.push(v);
    large.push(v);
  }
  EXPECT_NEAR(small.stderr_of_mean() / large.stderr_of_mean(), std::sqrt(2.0), 0.2 * std::sqrt(2.0));
}

TEST(WeakError, DuplicatedEpsilonGivesUnitRatios) {
  EnsembleStats kin, lim;
  for (std::size_t e = 0; e < 3; ++e)
    for (double v : {1.0, 1.2, 0.9}) kin.at(e, "lin", 0).push(v);
  for (double v : {0.5, 0.6}) lim.at(0, "lin", 0).push(v);
  auto table = weak_error_table(kin, lim, {0.1, 0.1, 0.1}, {"lin"}, 0);
  ASSERT_EQ(table.rows.size(), 3u);
  EXPECT_TRUE(std::isnan(table.rows[0].ratio));
  EXPECT_EQ(table.rows[1].ratio, 1.0);
  EXPECT_EQ(table.rows[2].ratio, 1.0);
  EXPECT_EQ(table.verdicts.at("lin"), kVerdictInconclusive);
}

TEST(WeakError, VerdictsFollowCIs) {
  EnsembleStats kin, lim;
  // Zero-variance entries: the CIs vanish and the comparison is exact.
  kin.at(0, "q", 0).push(2.0);
  kin.at(1, "q", 0).push(1.1);
  lim.at(0, "q", 0).push(1.0);
  auto t = weak_error_table(kin, lim, {0.2, 0.1}, {"q"}, 0);
  EXPECT_EQ(t.verdicts.at("q"), kVerdictConsistent);
  EXPECT_NEAR(t.rows[1].ratio, 0.1, 1e-12);
  EnsembleStats grow;
  grow.at(0, "q", 0).push(1.1);
  grow.at(1, "q", 0).push(2.0);
  EXPECT_EQ(weak_error_table(grow, lim, {0.2, 0.1}, {"q"}, 0).verdicts.at("q"), kVerdictInconsistent);
  EXPECT_THROW(weak_error_table(kin, lim, {0.2}, {"q"}, 0), Error);
}

TEST(Sobolev, Examples) {
  auto sp = fixtures::spectral(1, 32);
  const Grid& g = sp->grid();
  std::mt19937_64 rng(4);
  auto a = fixtures::random_smooth(g, rng);
  auto b = fixtures::random_smooth(g, rng);
  EXPECT_EQ(sobolev_distance(*sp, a, a, 1.0), 0.0);
  GridFunction d(g.size());
  for (std::size_t p = 0; p < g.size(); ++p) d[p] = a[p] - b[p];
  EXPECT_NEAR(sobolev_distance(*sp, a, b, 0.0), l2_norm(d), 1e-12);
  auto c = fourier_mode(g, Trig::Cos, {1, 0});
  GridFunction zero(g.size(), 0.0);
  const double expected = l2_norm(c) / std::sqrt(1.0 + 4 * std::numbers::pi * std::numbers::pi);
  EXPECT_NEAR(sobolev_distance(*sp, c, zero, 1.0), expected, 1e-13);
  EXPECT_THROW(sobolev_distance(*sp, a, GridFunction(16, 0.0), 1.0), Error);
}
