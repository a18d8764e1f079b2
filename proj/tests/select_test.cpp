#include "qfcp/select.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace qfcp;

namespace {

Dataset three_steps(std::uint64_t seed, int n = 120, double sd = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sd);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = (i < n / 4 ? 0.0 : i < n / 2 ? 3.0 : i < 3 * n / 4 ? -1.0 : 2.0) + z(rng);
  return Dataset(y, Matrix::Ones(n, 1));
}

}  // namespace

TEST(LambdaAs, Formula) {
  // (log 20)^2.5 / 20
  EXPECT_NEAR(lambda_as(20), 0.7767, 5e-5);
  EXPECT_NEAR(lambda_as(100), std::pow(std::log(100.0), 2.5) / 100.0, 1e-15);
  EXPECT_LT(lambda_as(500), lambda_as(100));
  EXPECT_THROW(lambda_as(1), std::invalid_argument);
}

TEST(LambdaGrid, ParseLogAndLin) {
  const auto g = parse_lambda_grid("0.001:0.1:3");
  ASSERT_EQ(g.size(), 3u);
  EXPECT_NEAR(g[0], 0.001, 1e-18);
  EXPECT_NEAR(g[1], 0.01, 1e-15);
  EXPECT_EQ(g[2], 0.1);
  EXPECT_EQ(parse_lambda_grid("0:1:5:lin"), (std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0}));
  EXPECT_THROW(parse_lambda_grid("0:1:5"), std::invalid_argument);
  EXPECT_THROW(parse_lambda_grid("1:0.5:3"), std::invalid_argument);
  EXPECT_THROW(parse_lambda_grid("a:1:3"), std::invalid_argument);
  EXPECT_THROW(parse_lambda_grid("0.1:1:2.5"), std::invalid_argument);
  EXPECT_THROW(parse_lambda_grid("0.1:1:3:cubic"), std::invalid_argument);
}

TEST(LambdaGrid, DefaultIsRelativeToTheRate) {
  const auto g = default_grid(100);
  ASSERT_EQ(g.size(), 16u);
  EXPECT_NEAR(g.front(), 0.01 * lambda_as(100), 1e-15);
  EXPECT_NEAR(g.back(), 0.5 * lambda_as(100), 1e-14);
  EXPECT_TRUE(std::is_sorted(g.begin(), g.end()));
}

TEST(KTarget, HitsRequestedCount) {
  const Dataset d = three_steps(1, 120, 0.1);
  for (int k : {0, 3}) {
    const auto r = lambda_for_k_changes(d, k, Pipeline::fused);
    EXPECT_TRUE(r.exact) << "K = " << k;
    EXPECT_EQ(static_cast<int>(r.fit.changes.size()), k);
    EXPECT_FALSE(r.evaluations.empty());
  }
  EXPECT_THROW(lambda_for_k_changes(d, -1, Pipeline::fused), std::invalid_argument);
}

TEST(KTarget, NearestCountWhenUnreachable) {
  // the count is not monotone in lambda; when K is skipped the closest
  // evaluated count is returned
  const Dataset d = three_steps(1);
  for (int k : {1, 2, 3, 7}) {
    const auto r = lambda_for_k_changes(d, k, Pipeline::fused);
    const int got = static_cast<int>(r.fit.changes.size());
    EXPECT_EQ(r.exact, got == k);
    for (auto [lam, count] : r.evaluations) EXPECT_LE(std::abs(got - k), std::abs(count - k)) << lam;
  }
}

TEST(KTarget, OneChangeLandsOnTheStep) {
  Vector y(80);
  for (int i = 0; i < 80; ++i) y(i) = (i < 50 ? 0.0 : 4.0) + 0.05 * std::sin(3.0 * i);
  const auto r = lambda_for_k_changes(Dataset(y, Matrix::Ones(80, 1)), 1, Pipeline::fused);
  ASSERT_TRUE(r.exact);
  EXPECT_EQ(r.fit.changes, (ChangePointSet{51}));
}

TEST(OracleMse, PicksGridMinimum) {
  const Dataset d = three_steps(3);
  TrueSegmentation t;
  t.change_fractions = {0.25, 0.5, 0.75};
  t.phase_coeffs = {Vector::Constant(1, 0.0), Vector::Constant(1, 3.0), Vector::Constant(1, -1.0),
                    Vector::Constant(1, 2.0)};
  const std::vector<double> grid{0.001, 0.01, 0.05, 0.5};
  const auto sel = lambda_oracle_mse(d, t, grid, Pipeline::fused);
  ASSERT_EQ(sel.scores.size(), grid.size());
  const auto best = std::min_element(sel.scores.begin(), sel.scores.end()) - sel.scores.begin();
  EXPECT_EQ(sel.lambda, grid[static_cast<std::size_t>(best)]);
  // recompute the chosen score independently
  const Vector diff = t.path(d.n()).predictions(d.x) - sel.fit.path(d.n()).predictions(d.x);
  EXPECT_NEAR(diff.squaredNorm() / d.n(), sel.scores[static_cast<std::size_t>(best)], 1e-14);
}

TEST(Bic, ValueAndSelection) {
  const Dataset d = three_steps(4);
  const auto f = run_pipeline(d, 0.02, Pipeline::fused);
  const Vector r = d.y - f.path(d.n()).predictions(d.x);
  double loss = 0.0;
  for (int i = 0; i < d.n(); ++i) loss += r(i) >= 0 ? 0.5 * r(i) : -0.5 * r(i);
  EXPECT_NEAR(bic_value(d, f, DetectorConfig{}),
              d.n() * std::log(loss / d.n()) + static_cast<double>(f.changes.size()) * std::log(120.0), 1e-10);
  const auto sel = lambda_bic(d, {0.001, 0.02, 0.1, 2.0}, Pipeline::fused);
  EXPECT_EQ(sel.scores.size(), 4u);
  EXPECT_EQ(sel.scores[1], bic_value(d, f, DetectorConfig{}));
  EXPECT_THROW(lambda_bic(d, {}, Pipeline::fused), std::invalid_argument);
}

TEST(RunPipeline, SquaredAndAdaptive) {
  const Dataset d = three_steps(5);
  const auto sq = run_pipeline(d, 0.02, Pipeline::squared);
  EXPECT_TRUE(sq.converged);
  EXPECT_FALSE(sq.two_stage.has_value());
  const auto ad = run_pipeline(d, 0.01, Pipeline::adaptive);
  ASSERT_TRUE(ad.two_stage.has_value());
  EXPECT_EQ(ad.changes, ad.two_stage->stage2.changes);
  EXPECT_EQ(parse_pipeline("adaptive"), Pipeline::adaptive);
  EXPECT_THROW(parse_pipeline("x"), std::invalid_argument);
}

TEST(RunPipeline, RefitReplacesPenalizedCoefficients) {
  const Dataset d = three_steps(6);
  DetectorConfig cfg;
  cfg.refit = true;
  const auto f = run_pipeline(d, 0.05, Pipeline::fused, cfg);
  EXPECT_EQ(f.segments.source, CoefficientSource::refit);
  EXPECT_EQ(f.segments.changes, f.changes);
}
