#include "qfcp/lp_oracle.hpp"
#include "qfcp/solver.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qfcp;

namespace {

Dataset intercept_only(std::initializer_list<double> ys) {
  Vector y(static_cast<Eigen::Index>(ys.size()));
  Eigen::Index i = 0;
  for (double v : ys) y(i++) = v;
  return Dataset(y, Matrix::Ones(y.size(), 1));
}

Dataset random_p1(std::mt19937_64& rng, int n) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_int_distribution<int> jumps(0, 2);
  Vector y(n);
  double level = 0.0;
  for (int i = 0; i < n; ++i) {
    if (i > 0 && jumps(rng) == 0) level += 2.0 * z(rng);
    y(i) = level + z(rng);
  }
  return Dataset(y, Matrix::Ones(n, 1));
}

}  // namespace

TEST(ProxCheckLoss, ClosedFormBranches) {
  EXPECT_DOUBLE_EQ(prox_check_loss(3.0, 1.0, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(prox_check_loss(0.0, 1.0, 0.5), 0.0);
  EXPECT_DOUBLE_EQ(prox_check_loss(-3.0, 1.0, 0.5), -2.5);
}

TEST(ProxGroupNorm, ShrinksTowardZero) {
  Vector w(2);
  w << 3.0, 4.0;
  const Vector z = prox_group_norm(w, 2.0);
  EXPECT_NEAR(z(0), 1.8, 1e-15);
  EXPECT_NEAR(z(1), 2.4, 1e-15);
  EXPECT_EQ(prox_group_norm(w, 5.0), Vector::Zero(2));
  EXPECT_EQ(prox_group_norm(w, 0.0), w);
}

TEST(Solver, TwoPointExactFit) {
  const Dataset d = intercept_only({0.0, 10.0});
  const auto pen = PenaltySpec::quantile(0.1, 0.5, 2);
  const FitResult fit = solve(d, pen);
  EXPECT_TRUE(fit.converged);
  EXPECT_NEAR(fit.objective_value, 2.0, 1e-9);
  EXPECT_NEAR(fit.path.beta(0, 0), 0.0, 1e-9);
  EXPECT_NEAR(fit.path.beta(1, 0), 10.0, 1e-9);
  EXPECT_EQ(fit.active_set, (ChangePointSet{2}));
  EXPECT_LE(fit.kkt_max_violation, 1e-8);
}

TEST(LpOracle, TwoPointInstanceBothRoutes) {
  const Dataset d = intercept_only({0.0, 10.0});
  EXPECT_NEAR(lp_oracle_p1(d, PenaltySpec::quantile(0.1, 0.5, 2), true).objective_value, 2.0, 1e-12);
  EXPECT_NEAR(lp_oracle_p1(d, PenaltySpec::quantile(0.1, 0.5, 2), false).objective_value, 2.0, 1e-12);
  EXPECT_NEAR(lp_oracle_p1(d, PenaltySpec::quantile(1e6, 0.5, 2), true).objective_value, 5.0, 1e-9);
  EXPECT_NEAR(lp_oracle_p1(d, PenaltySpec::quantile(1e6, 0.5, 2), false).objective_value, 5.0, 1e-9);
}

TEST(LpOracle, FourPointMatchesSolver) {
  const Dataset d = intercept_only({0.0, 0.0, 10.0, 10.0});
  const auto pen = PenaltySpec::quantile(0.05, 0.5, 4);
  const double ref = lp_oracle_p1(d, pen).objective_value;
  EXPECT_NEAR(solve(d, pen).objective_value, ref, 1e-6);
}

TEST(Solver, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> size(2, 12);
  std::uniform_real_distribution<double> loglam(std::log(1e-3), std::log(2.0));
  const double taus[] = {0.3, 0.5, 0.7};
  int unconverged = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const int n = size(rng);
    const Dataset d = random_p1(rng, n);
    const auto pen = PenaltySpec::quantile(std::exp(loglam(rng)), taus[rep % 3], n);
    const FitResult dp = lp_oracle_p1(d, pen, true);
    const FitResult lp = lp_oracle_p1(d, pen, false);
    const FitResult fit = solve(d, pen);
    unconverged += !fit.converged;
    EXPECT_NEAR(dp.objective_value, lp.objective_value, 1e-9 * (1.0 + lp.objective_value)) << "rep " << rep;
    EXPECT_NEAR(fit.objective_value, dp.objective_value, 1e-6 * (1.0 + dp.objective_value)) << "rep " << rep;
  }
  EXPECT_EQ(unconverged, 0);
}
