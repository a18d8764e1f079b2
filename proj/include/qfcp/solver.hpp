#pragma once

// Entry point for penalized fits. Both engines hand their iterate to the same
// exact polish and KKT certificate (fit.hpp); they differ in how they get close.

#include "qfcp/barrier.hpp"
#include "qfcp/fit.hpp"
#include "qfcp/splitting.hpp"

namespace qfcp {

inline FitResult solve(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg = {}) {
  data.validate();
  pen.validate(data.n());
  cfg.validate();
  if (cfg.method == SolverMethod::splitting) return detail::splitting_solve(data, pen, cfg);
  return detail::barrier_solve(data, pen, cfg);
}

/// Unpenalized quantile regression of y on x (one phase).
inline Vector quantile_regression(const Matrix& x, const Vector& y, double tau, const SolverConfig& cfg = {}) {
  // A penalty no difference can pay for keeps the path constant; the
  // candidate snapping makes the interpolating vertex exact.
  Dataset data(y, x);
  const int n = data.n();
  const double scale = (1.0 + y.cwiseAbs().sum()) * (1.0 + x.cwiseAbs().maxCoeff());
  const FitResult fit = solve(data, PenaltySpec::quantile(1e6 * scale / n, tau, n), cfg);
  return fit.path.beta.row(0).transpose();
}


}  // namespace qfcp
