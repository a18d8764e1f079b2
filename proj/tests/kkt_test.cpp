#include "oracles.hpp"
#include "qfcp/lp_oracle.hpp"
#include "qfcp/solver.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qfcp;

TEST(Kkt, ExactOptimaPass) {
  std::mt19937_64 rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    const int n = 3 + rep % 10;
    const Dataset d = oracle::random_p1(rng, n);
    const auto pen = PenaltySpec::quantile(0.02 + 0.05 * (rep % 7), 0.3 + 0.2 * (rep % 3), n);
    const FitResult ref = lp_oracle_p1(d, pen, true);
    EXPECT_LE(kkt_residuals(d, ref.path, pen).max_violation, 1e-8) << "rep " << rep;
  }
}

TEST(Kkt, PerturbedOptimaFail) {
  std::mt19937_64 rng(32);
  int checked = 0;
  for (int rep = 0; rep < 60; ++rep) {
    const int n = 4 + rep % 9;
    const Dataset d = oracle::random_p1(rng, n);
    const auto pen = PenaltySpec::quantile(0.05, 0.5, n);
    const double best = lp_oracle_p1(d, pen, true).objective_value;
    Matrix beta = lp_oracle_p1(d, pen, true).path.beta;
    beta(rep % n, 0) += 1.0;
    // optima need not be unique; only a strictly worse path must be flagged
    if (oracle::fused_objective(d, beta, 0.05, 0.5) <= best + 1e-3) continue;
    ++checked;
    EXPECT_GT(kkt_residuals(d, beta, pen).max_violation, 1e-4) << "rep " << rep;
  }
  EXPECT_GT(checked, 40);
}

TEST(Kkt, PooledFitAtHugeLambdaPasses) {
  std::mt19937_64 rng(33);
  const Dataset d = oracle::random_p1(rng, 25);
  std::vector<double> ys(d.y.data(), d.y.data() + d.n());
  const double q = oracle::sample_quantile(ys, 0.5);
  const auto path = CoefficientPath::constant(25, Vector::Constant(1, q));
  EXPECT_LE(kkt_residuals(d, path, PenaltySpec::quantile(1e6, 0.5, 25)).max_violation, 1e-8);
}

TEST(Kkt, SquaredLossStationarity) {
  // lambda large: pooled mean is optimal, so S_1 = sum r = 0
  const Dataset d(Vector::LinSpaced(6, 0.0, 5.0), Matrix::Ones(6, 1));
  const auto pen = PenaltySpec::squared(100.0, 6);
  EXPECT_LE(kkt_residuals(d, CoefficientPath::constant(6, Vector::Constant(1, 2.5)), pen).max_violation, 1e-12);
  EXPECT_GT(kkt_residuals(d, CoefficientPath::constant(6, Vector::Constant(1, 2.0)), pen).max_violation, 1e-4);
}

TEST(Kkt, SolverFitsAreCertifiedWithP2) {
  std::mt19937_64 rng(34);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const int n = 40;
    Matrix x(n, 2);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = z(rng);
      y(i) = (i < 20 ? 1.0 : -1.0) * x(i, 1) + z(rng);
    }
    const Dataset d(y, x);
    const auto pen = PenaltySpec::quantile(0.01 * (1 + rep), 0.5, n);
    const FitResult fit = solve(d, pen);
    ASSERT_TRUE(fit.converged);
    EXPECT_LE(kkt_residuals(d, fit.path, pen).max_violation, 1e-4);
  }
}

TEST(Kkt, ReportsWorstIndex) {
  const Dataset d(Vector::LinSpaced(4, 0.0, 3.0), Matrix::Ones(4, 1));
  const auto pen = PenaltySpec::quantile(0.01, 0.5, 4);
  Matrix beta = Matrix::Zero(4, 1);
  const KktReport r = kkt_residuals(d, beta, pen);
  EXPECT_GE(r.worst_index, 1);
  EXPECT_LE(r.worst_index, 4);
  EXPECT_EQ(r.per_index(r.worst_index - 1), r.max_violation);
}
