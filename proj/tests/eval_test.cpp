#include "qfcp/eval.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qfcp;

TEST(SetDistance, OneSided) {
  const ChangePointSet a{10, 50}, b{12, 40, 90};
  EXPECT_EQ(set_distance(a, b), 40.0);  // 90 is 40 from 50
  EXPECT_EQ(set_distance(b, a), 10.0);  // 50 is 10 from 40
  EXPECT_EQ(set_distance(a, a), 0.0);
  EXPECT_EQ(set_distance(a, ChangePointSet{}), 0.0);
  EXPECT_TRUE(std::isinf(set_distance(ChangePointSet{}, a)));
}

TEST(SetDistance, BruteForceAgreement) {
  for (int s = 0; s < 200; ++s) {
    std::vector<int> av, bv;
    for (int t = 2; t < 60; ++t) {
      if ((t * 7 + s * 13) % 11 == 0) av.push_back(t);
      if ((t * 5 + s * 3) % 9 == 0) bv.push_back(t);
    }
    if (av.empty()) continue;
    const ChangePointSet a(av), b(bv);
    double brute = 0.0;
    for (int y : bv) {
      int best = 1 << 30;
      for (int x : av) best = std::min(best, std::abs(x - y));
      brute = std::max(brute, static_cast<double>(best));
    }
    EXPECT_EQ(set_distance(a, b), brute);
  }
}

TEST(DetectionError, MeanNearestOverTruth) {
  const ChangePointSet truth{21, 51, 71};
  EXPECT_NEAR(*detection_error(ChangePointSet{20, 55, 71}, truth, 100), (1.0 + 4.0 + 0.0) / 300.0, 1e-15);
  EXPECT_FALSE(detection_error(ChangePointSet{21, 51}, truth, 100).has_value());
  EXPECT_NEAR(*detection_error(ChangePointSet{5, 21, 51, 71}, truth, 100), 0.0, 1e-15);
  EXPECT_THROW(detection_error(truth, truth, 0), std::invalid_argument);
}

TEST(PredictionMetrics, BiasAndMse) {
  Matrix x = Matrix::Ones(4, 1);
  const auto truth = CoefficientPath::constant(4, Vector::Constant(1, 1.0));
  Matrix b(4, 1);
  b << 0.0, 1.0, 1.0, 3.0;
  const auto m = prediction_metrics(truth, CoefficientPath::from_beta(b), x);
  // differences 1, 0, 0, -2
  EXPECT_DOUBLE_EQ(m.bias, -0.25);
  EXPECT_DOUBLE_EQ(m.mse, 5.0 / 4.0);
  EXPECT_THROW(prediction_metrics(truth, CoefficientPath::constant(3, Vector::Ones(1)), x), std::invalid_argument);
}

TEST(JumpSummary, LowerMedian) {
  const auto s = jump_summary({5, 1, 3, 9});
  EXPECT_EQ(s.min, 1);
  EXPECT_EQ(s.median, 3);
  EXPECT_EQ(s.max, 9);
  EXPECT_EQ(jump_summary({4}).median, 4);
  EXPECT_THROW(jump_summary({}), std::invalid_argument);
}
