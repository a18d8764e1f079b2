#pragma once

// Accuracy measures for estimated change-points and coefficient paths.

#include "qfcp/change_points.hpp"
#include "qfcp/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qfcp {

/// E(A || B) = sup_{b in B} inf_{a in A} |a - b|, in index units. One-sided:
/// it asks how far each element of B is from A. +inf when A is empty, 0 when
/// B is empty.
inline double set_distance(const ChangePointSet& a, const ChangePointSet& b) {
  if (b.empty()) return 0.0;
  if (a.empty()) return std::numeric_limits<double>::infinity();
  int worst = 0;
  for (int t : b) {
    // a is sorted; the nearest element is next to the insertion point
    auto it = std::lower_bound(a.begin(), a.end(), t);
    int best = std::numeric_limits<int>::max();
    if (it != a.end()) best = *it - t;
    if (it != a.begin()) best = std::min(best, t - *std::prev(it));
    worst = std::max(worst, best);
  }
  return static_cast<double>(worst);
}

/// Mean over true changes of |nearest estimate - truth| / n. Absent when
/// fewer changes were estimated than exist.
inline std::optional<double> detection_error(const ChangePointSet& est, const ChangePointSet& truth, int n) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (truth.empty() || est.size() < truth.size()) return std::nullopt;
  double sum = 0.0;
  for (int t : truth) {
    int best = std::numeric_limits<int>::max();
    for (int e : est) best = std::min(best, std::abs(e - t));
    sum += static_cast<double>(best) / n;
  }
  return sum / static_cast<double>(truth.size());
}

struct PredictionMetrics {
  double bias = 0.0;
  double mse = 0.0;
};

/// bias = mean(x_i' beta*_i - x_i' betahat_i), mse = mean of its square.
inline PredictionMetrics prediction_metrics(const CoefficientPath& truth, const CoefficientPath& est, const Matrix& x) {
  if (truth.beta.rows() != x.rows() || est.beta.rows() != x.rows() || truth.beta.cols() != x.cols() ||
      est.beta.cols() != x.cols())
    throw std::invalid_argument("prediction_metrics: dimension mismatch");
  const Vector diff = truth.predictions(x) - est.predictions(x);
  const double n = static_cast<double>(x.rows());
  return {diff.sum() / n, diff.squaredNorm() / n};
}

struct JumpSummary {
  int min = 0;
  int median = 0;
  int max = 0;
};

/// Median is the lower middle element for even lengths.
inline JumpSummary jump_summary(std::vector<int> counts) {
  if (counts.empty()) throw std::invalid_argument("jump_summary needs at least one count");
  std::sort(counts.begin(), counts.end());
  return {counts.front(), counts[(counts.size() - 1) / 2], counts.back()};
}

}  // namespace qfcp
