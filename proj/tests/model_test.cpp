#include "qfcp/dataset_io.hpp"
#include "qfcp/model.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace qfcp;

TEST(PaperScenario, ChangeIndicesUseFloorPlusOne) {
  const auto spec = build_paper_scenario(100);
  EXPECT_EQ(spec.segmentation.change_indices(100), (std::vector<int>{21, 51, 71}));
  EXPECT_EQ(build_paper_scenario(500).segmentation.change_indices(500), (std::vector<int>{101, 251, 351}));
}

TEST(PaperScenario, PhaseMembershipAndNoiselessResponse) {
  const auto spec = build_paper_scenario(100);
  EXPECT_EQ(spec.segmentation.phase_of(20, 100), 0);
  EXPECT_EQ(spec.segmentation.phase_of(21, 100), 1);
  EXPECT_EQ(spec.segmentation.phase_of(50, 100), 1);
  EXPECT_EQ(spec.segmentation.phase_of(51, 100), 2);
  EXPECT_EQ(spec.segmentation.phase_of(100, 100), 3);

  ScenarioSpec quiet = spec;
  quiet.noise_scale = 0.0;
  const auto [d, truth] = sample_dataset(quiet, 0.5);
  // i = 50: phase (2.4, -6) at x = (1, 0.5)
  EXPECT_NEAR(d.y(49), 2.4 - 6.0 * 0.5, 1e-15);
  EXPECT_NEAR(d.y(0), 0.0 + 1.0 * 0.01, 1e-15);
  EXPECT_NEAR(d.y(99), 0.5, 1e-15);
  EXPECT_EQ(d.x(99, 1), 1.0);
}

TEST(PaperScenario, GapsAndSmallN) {
  const auto seg = build_paper_scenario(100).segmentation;
  EXPECT_EQ(seg.min_gap(100), 20);
  EXPECT_EQ(seg.max_gap(100), 30);
  EXPECT_THROW(build_paper_scenario(5), std::invalid_argument);
}

TEST(StockScenario, ChangesAndDesign) {
  const auto spec = build_stock_scenario(3);
  EXPECT_EQ(spec.segmentation.change_indices(251), (std::vector<int>{83, 125, 166}));
  const auto [d, truth] = sample_dataset(spec, 0.5);
  EXPECT_EQ(d.n(), 251);
  EXPECT_EQ(d.p(), 3);
  EXPECT_TRUE((d.x.col(0).array() == 1.0).all());
}

TEST(Sampling, DeterministicInSeed) {
  auto spec = build_paper_scenario(200);
  spec.seed = 42;
  spec.errors = ErrorKind::student_t3;
  const auto a = sample_dataset(spec, 0.3).first;
  const auto b = sample_dataset(spec, 0.3).first;
  EXPECT_EQ(a.y, b.y);
  spec.seed = 43;
  EXPECT_NE(sample_dataset(spec, 0.3).first.y, a.y);
}

TEST(Sampling, ErrorsHaveTauQuantileZero) {
  constexpr int draws = 200000;
  for (ErrorKind kind : {ErrorKind::normal, ErrorKind::student_t3, ErrorKind::cauchy}) {
    for (double tau : {0.2, 0.5, 0.8}) {
      const auto law = ErrorDistribution::make(kind, tau);
      auto rng = make_stream(7, static_cast<int>(kind), static_cast<int>(tau * 10));
      int below = 0;
      for (int i = 0; i < draws; ++i) below += law.sample(rng) < 0.0;
      const double frac = static_cast<double>(below) / draws;
      EXPECT_NEAR(frac, tau, 3.0 * std::sqrt(tau * (1.0 - tau) / draws)) << to_string(kind) << " tau " << tau;
    }
  }
}

TEST(ErrorQuantile, KnownValues) {
  EXPECT_NEAR(error_quantile(ErrorKind::normal, 0.975), 1.959963984540054, 1e-12);
  EXPECT_NEAR(error_quantile(ErrorKind::cauchy, 0.75), 1.0, 1e-12);
  // t3 upper quartile
  EXPECT_NEAR(error_quantile(ErrorKind::student_t3, 0.75), 0.764892328404345, 1e-10);
  EXPECT_THROW(error_quantile(ErrorKind::normal, 1.0), std::invalid_argument);
}

TEST(CoefficientPath, ThetaRoundTrip) {
  Matrix beta(4, 2);
  beta << 1, 2, 1, 2, 3, -1, 3, -1;
  const auto path = CoefficientPath::from_beta(beta);
  EXPECT_EQ(path.theta.row(1).norm(), 0.0);
  EXPECT_EQ(path.theta(2, 0), 2.0);
  EXPECT_EQ(CoefficientPath::from_theta(path.theta).beta, beta);
}

TEST(Dataset, Validation) {
  Matrix x = Matrix::Ones(3, 2);
  EXPECT_NO_THROW(Dataset(Vector::Zero(3), x));
  EXPECT_THROW(Dataset(Vector::Zero(2), x), std::invalid_argument);
  x(1, 0) = 2.0;
  EXPECT_THROW(Dataset(Vector::Zero(3), x), std::invalid_argument);
  Matrix z = Matrix::Zero(3, 1);
  EXPECT_THROW(Dataset(Vector::Zero(3), z), std::invalid_argument);
  Vector bad = Vector::Zero(3);
  bad(1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(Dataset(bad, Matrix::Ones(3, 1)), std::invalid_argument);
}

TEST(DatasetCsv, RoundTripIsExact) {
  auto spec = build_paper_scenario(30);
  spec.seed = 9;
  const auto d = sample_dataset(spec, 0.5).first;
  std::stringstream ss;
  write_dataset_csv(ss, d);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.x, d.x);
}

TEST(DatasetCsv, RejectsMalformedInput) {
  std::stringstream missing("y,x1\n1,1\n2\n");
  EXPECT_ANY_THROW(read_dataset_csv(missing));
  std::stringstream word("y,x1\n1,1\nabc,1\n");
  EXPECT_ANY_THROW(read_dataset_csv(word));
  std::stringstream no_intercept("y,x1\n1,1\n2,3\n");
  EXPECT_ANY_THROW(read_dataset_csv(no_intercept));
}

TEST(SegmentationJson, RoundTrip) {
  const auto seg = build_paper_scenario(100).segmentation;
  const auto back = segmentation_from_json(to_json(seg));
  EXPECT_EQ(back.change_fractions, seg.change_fractions);
  ASSERT_EQ(back.phase_coeffs.size(), 4u);
  EXPECT_EQ(back.phase_coeffs[1], seg.phase_coeffs[1]);
  auto spec = build_stock_scenario(5);
  const auto spec2 = scenario_from_json(to_json(spec));
  EXPECT_EQ(spec2.seed, 5u);
  EXPECT_EQ(spec2.design, Design::gaussian);
}

TEST(TrueSegmentation, RejectsBadStructure) {
  TrueSegmentation s;
  s.change_fractions = {0.5, 0.4};
  s.phase_coeffs = {Vector::Zero(1), Vector::Ones(1), Vector::Zero(1)};
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s.change_fractions = {0.4};
  s.phase_coeffs = {Vector::Ones(1), Vector::Ones(1)};
  EXPECT_THROW(s.validate(), std::invalid_argument);
}
