#include "oracles.hpp"
#include "qfcp/prox.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qfcp;

TEST(ProxCheckLoss, AgreesWithNumericMinimizer) {
  std::mt19937_64 rng(101);
  std::normal_distribution<double> z(0.0, 2.0);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const double w = z(rng), sigma = 3.0 * u(rng), tau = u(rng);
    worst = std::max(worst, std::abs(prox_check_loss(w, sigma, tau) - oracle::prox_check_numeric(w, sigma, tau)));
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(ProxCheckLoss, OptimalAgainstNeighbours) {
  std::mt19937_64 rng(102);
  std::normal_distribution<double> z(0.0, 2.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double w = z(rng), sigma = 0.7, tau = 0.3;
    auto f = [&](double v) { return oracle::rho(v, tau) + (v - w) * (v - w) / (2 * sigma); };
    const double p = prox_check_loss(w, sigma, tau);
    EXPECT_LE(f(p), f(p + 1e-4));
    EXPECT_LE(f(p), f(p - 1e-4));
  }
}

TEST(ProxHalfSquare, Closed) {
  EXPECT_DOUBLE_EQ(prox_half_square(3.0, 2.0), 1.0);
  EXPECT_DOUBLE_EQ(prox_half_square(-4.0, 1.0), -2.0);
}

TEST(ProxGroupNorm, AgreesWithNumericMinimizer) {
  std::mt19937_64 rng(103);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 3.0);
  double worst = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int p = 1 + rep % 4;
    const Vector w = Vector::NullaryExpr(p, [&] { return z(rng); });
    const double kappa = u(rng);
    const Vector a = prox_group_norm(w, kappa), b = oracle::prox_group_numeric(w, kappa);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    // no random perturbation does better
    const Vector pert = a + 1e-3 * Vector::NullaryExpr(p, [&] { return z(rng); });
    EXPECT_LE(oracle::group_objective(a, w, kappa), oracle::group_objective(pert, w, kappa) + 1e-15);
  }
  EXPECT_LE(worst, 1e-8);
}

TEST(ProxGroupNorm, InplaceMatches) {
  Vector w(3);
  w << 1.0, -2.0, 2.0;
  Vector v = w;
  EXPECT_TRUE(prox_group_norm_inplace(v.data(), 3, 1.5));
  EXPECT_NEAR((v - prox_group_norm(w, 1.5)).norm(), 0.0, 1e-15);
  EXPECT_FALSE(prox_group_norm_inplace(v.data(), 3, 10.0));
  EXPECT_EQ(v, Vector::Zero(3));
}
