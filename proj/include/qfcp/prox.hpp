#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace qfcp {

/// argmin_z rho_tau(z) + (z - w)^2 / (2 sigma).
constexpr double prox_check_loss(double w, double sigma, double tau) {
  if (w > sigma * tau) return w - sigma * tau;
  if (w < -sigma * (1.0 - tau)) return w + sigma * (1.0 - tau);
  return 0.0;
}

/// argmin_z z^2 / 2 + (z - w)^2 / (2 sigma).
constexpr double prox_half_square(double w, double sigma) { return w / (1.0 + sigma); }

/// Block soft-threshold: argmin_z kappa ||z|| + ||z - w||^2 / 2.
template <class Derived>
Eigen::VectorXd prox_group_norm(const Eigen::MatrixBase<Derived>& w, double kappa) {
  const double norm = w.norm();
  if (norm <= kappa) return Eigen::VectorXd::Zero(w.size());
  return (1.0 - kappa / norm) * w;
}

/// In-place block soft-threshold on a raw span of length p. Returns true if
/// the block survived (nonzero).
inline bool prox_group_norm_inplace(double* w, int p, double kappa) {
  double sq = 0.0;
  for (int k = 0; k < p; ++k) sq += w[k] * w[k];
  const double norm = std::sqrt(sq);
  if (norm <= kappa) {
    for (int k = 0; k < p; ++k) w[k] = 0.0;
    return false;
  }
  const double s = 1.0 - kappa / norm;
  for (int k = 0; k < p; ++k) w[k] *= s;
  return true;
}

}  // namespace qfcp
