#pragma once

// Loss and penalty evaluation for the fused objective
//
//   sum_i loss(y_i - x_i' beta_i) + n * lambda * sum_{i>=2} w_i * ||beta_i - beta_{i-1}||
//
// where loss is the check function rho_tau or the squared-loss comparator
// r^2 / 2. With all weights one this is the plain quantile fused objective;
// data-driven weights give the adaptive version.

#include "qfcp/model.hpp"

#include <cmath>
#include <stdexcept>

namespace qfcp {

enum class LossKind { quantile, squared };

/// rho_tau(u) = u * (tau - 1{u < 0}).
constexpr double check_loss(double u, double tau) { return u * (tau - (u < 0.0 ? 1.0 : 0.0)); }

struct PenaltySpec {
  double lambda = 0.0;
  /// Length n; entry 0 (observation 1) is never used.
  Vector weights;
  LossKind loss = LossKind::quantile;
  double tau = 0.5;

  static PenaltySpec quantile(double lambda, double tau, int n) {
    return {lambda, Vector::Ones(n), LossKind::quantile, tau};
  }
  static PenaltySpec squared(double lambda, int n) { return {lambda, Vector::Ones(n), LossKind::squared, 0.5}; }
  static PenaltySpec weighted(double lambda, double tau, Vector weights, LossKind loss = LossKind::quantile) {
    return {lambda, std::move(weights), loss, tau};
  }

  /// Group threshold n * lambda * w_j for 1-based index j >= 2.
  [[nodiscard]] double group_cost(int j) const { return static_cast<double>(weights.size()) * lambda * weights(j - 1); }

  void validate(int n) const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("lambda must be finite and >= 0");
    if (weights.size() != n)
      throw std::invalid_argument("weights length " + std::to_string(weights.size()) + " does not match n = " +
                                  std::to_string(n));
    for (int j = 1; j < n; ++j)
      if (!(weights(j) > 0.0) || !std::isfinite(weights(j)))
        throw std::invalid_argument("weights must be positive and finite");
    if (loss == LossKind::quantile && !(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  }
};

inline double loss_value(double r, const PenaltySpec& pen) {
  return pen.loss == LossKind::quantile ? check_loss(r, pen.tau) : 0.5 * r * r;
}

inline void check_dims(const Dataset& data, const Matrix& beta) {
  if (beta.rows() != data.n() || beta.cols() != data.p())
    throw std::invalid_argument("coefficient path is " + std::to_string(beta.rows()) + "x" +
                                std::to_string(beta.cols()) + ", dataset is " + std::to_string(data.n()) + "x" +
                                std::to_string(data.p()));
}

inline Vector residuals(const Dataset& data, const Matrix& beta) {
  check_dims(data, beta);
  return data.y - (data.x.array() * beta.array()).rowwise().sum().matrix();
}

/// G_n(beta) = sum_i rho_tau(y_i - x_i' beta_i).
inline double quantile_process(const Dataset& data, const Matrix& beta, double tau) {
  const Vector r = residuals(data, beta);
  double s = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) s += check_loss(r(i), tau);
  return s;
}
inline double quantile_process(const Dataset& data, const CoefficientPath& path, double tau) {
  return quantile_process(data, path.beta, tau);
}

inline double fused_penalty(const Matrix& beta, const PenaltySpec& pen) {
  double s = 0.0;
  for (Eigen::Index i = 1; i < beta.rows(); ++i)
    s += pen.weights(i) * (beta.row(i) - beta.row(i - 1)).norm();
  return static_cast<double>(beta.rows()) * pen.lambda * s;
}

inline double objective(const Dataset& data, const Matrix& beta, const PenaltySpec& pen) {
  check_dims(data, beta);
  pen.validate(data.n());
  if (!beta.allFinite()) throw std::invalid_argument("coefficient path contains non-finite values");
  const Vector r = residuals(data, beta);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i) loss += loss_value(r(i), pen);
  return loss + fused_penalty(beta, pen);
}
inline double objective(const Dataset& data, const CoefficientPath& path, const PenaltySpec& pen) {
  return objective(data, path.beta, pen);
}

/// One-sided directional derivative of the objective at `path` along a
/// direction given in the difference (theta) parameterization.
inline double directional_derivative(const Dataset& data, const CoefficientPath& path, const PenaltySpec& pen,
                                     const Matrix& direction_theta) {
  check_dims(data, path.beta);
  check_dims(data, direction_theta);
  pen.validate(data.n());
  if (direction_theta.norm() == 0.0) throw std::invalid_argument("direction must be nonzero");

  const Matrix dbeta = beta_from_theta(direction_theta);
  const Vector r = residuals(data, path.beta);
  const double scale = 1.0 + data.y.cwiseAbs().maxCoeff();
  double d = 0.0;
  for (int i = 0; i < data.n(); ++i) {
    const double e = -data.x.row(i).dot(dbeta.row(i));  // derivative of the residual
    if (pen.loss == LossKind::squared) {
      d += r(i) * e;
    } else if (std::abs(r(i)) <= 1e-12 * scale) {
      d += std::max(pen.tau * e, (pen.tau - 1.0) * e);
    } else {
      d += (r(i) > 0.0 ? pen.tau : pen.tau - 1.0) * e;
    }
  }
  const double nl = data.n() * pen.lambda;
  for (int i = 1; i < data.n(); ++i) {
    const auto th = path.theta.row(i);
    const double norm = th.norm();
    const double dir = norm > 0.0 ? th.dot(direction_theta.row(i)) / norm : direction_theta.row(i).norm();
    d += nl * pen.weights(i) * dir;
  }
  return d;
}

}  // namespace qfcp
