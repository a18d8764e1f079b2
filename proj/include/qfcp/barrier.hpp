#pragma once

// Barrier path-following for the fused objective, followed by the exact
// polish of fit.hpp.
//
// Write the check loss through its epigraph (z_i >= tau r_i, z_i >= (tau-1) r_i)
// and each group term through a second-order cone (t_j >= ||beta_j - beta_{j-1}||).
// For a barrier weight T the epigraph and cone variables can be minimized out
// in closed form, leaving a smooth self-concordant function of beta alone:
//
//   F_T(beta) = sum_i g(r_i) + sum_j h_j(||beta_j - beta_{j-1}||),
//
// g(r) = T z - log(z - tau r) - log(z + (1 - tau) r) at the best z, and
// h(s) = q - log(1 + q) with q = sqrt(1 + (c T s)^2) (up to constants).
// Its Hessian is block tridiagonal. Inactive differences get stiffness of
// order (cT)^2, so the elimination is written as springs in series and the
// back substitution works on differences; nothing large is ever subtracted.
//
// g'(r) / T is the loss score and h'(s) u / T the group dual, so every centered
// iterate carries the scores the polish starts from.

#include "qfcp/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace qfcp::detail {

struct SmoothedLoss {
  double value;
  double d1;
  double d2;
};

/// Check loss with its epigraph variable minimized out at weight T.
inline SmoothedLoss smoothed_check(double r, double t, double tau) {
  const double tr = t * r;
  const double root = std::hypot(tr, 2.0);
  // a = z - tau r and b = a + r are the two slacks, both positive; each is
  // taken from the root formula without cancellation.
  const double a = tr <= 2.0 ? (2.0 - tr + root) / (2.0 * t) : 2.0 * r / (tr - 2.0 + root);
  const double b = tr >= -2.0 ? (tr + 2.0 + root) / (2.0 * t) : 2.0 * r / (tr + 2.0 - root);
  const double z = a + tau * r;
  return {t * z - std::log(a) - std::log(b), tau / a - (1.0 - tau) / b, 1.0 / (a * a + b * b)};
}

class BarrierProblem {
 public:
  BarrierProblem(const Dataset& data, const PenaltySpec& pen)
      : data_(data), pen_(pen), n_(data.n()), p_(data.p()), quantile_(pen.loss == LossKind::quantile), cost_(n_, 0.0) {
    for (int j = 1; j < n_; ++j) cost_[j] = pen.group_cost(j + 1);
  }

  /// Barrier parameter: 2 per loss epigraph (check loss) plus 2 per cone.
  [[nodiscard]] double degree() const { return (quantile_ ? 2.0 * n_ : 0.0) + 2.0 * (n_ - 1); }

  /// One Newton step at weight t. Returns the squared Newton decrement and
  /// leaves the step in `step` (n x p).
  double newton(const Matrix& beta, double t, Matrix& step, Vector& scores) {
    switch (p_) {
      case 1: return newton_fixed<1>(beta, t, step, scores);
      case 2: return newton_fixed<2>(beta, t, step, scores);
      case 3: return newton_fixed<3>(beta, t, step, scores);
      case 4: return newton_fixed<4>(beta, t, step, scores);
      default: return newton_fixed<Eigen::Dynamic>(beta, t, step, scores);
    }
  }

  /// F_T(beta) up to constants.
  [[nodiscard]] double value(const Matrix& beta, double t) const {
    double f = 0.0;
    for (int i = 0; i < n_; ++i) {
      const double r = data_.y(i) - data_.x.row(i).dot(beta.row(i));
      f += quantile_ ? smoothed_check(r, t, pen_.tau).value : 0.5 * t * r * r;
    }
    for (int j = 1; j < n_; ++j) {
      const double ct = cost_[j] * t;
      const double q = std::sqrt(1.0 + ct * ct * (beta.row(j) - beta.row(j - 1)).squaredNorm());
      f += q - std::log1p(q);
    }
    return f;
  }

  [[nodiscard]] const std::vector<double>& cost() const { return cost_; }

 private:
  template <int P>
  double newton_fixed(const Matrix& beta, double t, Matrix& step, Vector& scores) {
    using Block = Eigen::Matrix<double, P, P>;
    using Col = Eigen::Matrix<double, P, 1>;
    const int n = n_, p = p_;
    std::vector<Col> grad(n, Col::Zero(p));
    std::vector<Block> a(n);  // loss curvature per row
    std::vector<Block> k(n);  // spring j couples j-1 and j
    scores.resize(n);
    for (int i = 0; i < n; ++i) {
      const Col xi = data_.x.row(i).transpose();
      const double r = data_.y(i) - xi.dot(beta.row(i).transpose());
      double d1, d2;
      if (quantile_) {
        const SmoothedLoss s = smoothed_check(r, t, pen_.tau);
        d1 = s.d1;
        d2 = s.d2;
      } else {
        d1 = t * r;
        d2 = t;
      }
      scores(i) = d1 / t;
      grad[i] -= d1 * xi;
      a[i] = d2 * xi * xi.transpose();
    }
    const Block eye = Block::Identity(p, p);
    for (int j = 1; j < n; ++j) {
      const Col diff = (beta.row(j) - beta.row(j - 1)).transpose();
      const double ct = cost_[j] * t;
      const double q = std::sqrt(1.0 + ct * ct * diff.squaredNorm());
      const double kappa = ct * ct / (1.0 + q);
      const double omega = ct * ct / (q * (1.0 + q));
      grad[j] += kappa * diff;
      grad[j - 1] -= kappa * diff;
      k[j] = kappa * (eye - omega * diff * diff.transpose());
    }

    // e[i]: stiffness of rows 0..i seen from row i, without spring i+1
    std::vector<Block> e(n);
    std::vector<Col> w(n);
    e[0] = a[0];
    w[0] = -grad[0];
    for (int i = 1; i < n; ++i) {
      // springs in series: K (E + K)^{-1} E == (E^{-1} + K^{-1})^{-1}
      const Eigen::LDLT<Block> f(Block(e[i - 1] + k[i]));
      Block series = k[i] * f.solve(e[i - 1]);
      e[i] = a[i] + 0.5 * (series + series.transpose());
      w[i] = -grad[i] + k[i] * f.solve(w[i - 1]);
    }
    step.resize(n, p);
    Col next = Eigen::LDLT<Block>(e[n - 1]).solve(w[n - 1]);
    step.row(n - 1) = next.transpose();
    for (int i = n - 2; i >= 0; --i) {
      // x_i = x_{i+1} + (E_i + K_{i+1})^{-1} (w_i - E_i x_{i+1})
      const Col rhs = w[i] - e[i] * next;
      next += Eigen::LDLT<Block>(Block(e[i] + k[i + 1])).solve(rhs);
      step.row(i) = next.transpose();
    }
    double dec = 0.0;
    for (int i = 0; i < n; ++i) dec -= grad[i].dot(step.row(i).transpose());
    return dec;
  }

  const Dataset& data_;
  const PenaltySpec& pen_;
  int n_, p_;
  bool quantile_;
  std::vector<double> cost_;
};

/// Segmentation and ties read off a centered iterate: a difference is active
/// and a residual is a tie when c T s (resp. T |r|) is beyond (resp. below) the
/// geometric mean of T and the data scale, which separates the two regimes
/// (bounded vs linear growth in T) along the central path.
inline void classify(const Dataset& data, const Matrix& beta, const std::vector<double>& cost, double t,
                     bool quantile, std::vector<char>& active, std::vector<char>& tie) {
  const int n = data.n();
  const double yscale = 1.0 + data.y.cwiseAbs().maxCoeff();
  const double bscale = 1.0 + beta.cwiseAbs().maxCoeff();
  active.assign(n, 0);
  tie.assign(n, 0);
  for (int j = 1; j < n; ++j) {
    const double s = (beta.row(j) - beta.row(j - 1)).norm();
    active[j] = cost[j] * t * s > std::sqrt(cost[j] * t * bscale);
  }
  if (!quantile) return;
  for (int i = 0; i < n; ++i) {
    const double r = data.y(i) - data.x.row(i).dot(beta.row(i));
    tie[i] = t * std::abs(r) < std::sqrt(t * yscale);
  }
}

inline FitResult barrier_solve(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg) {
  const int n = data.n(), p = data.p();
  const bool quantile = pen.loss == LossKind::quantile;
  FitResult best;
  best.final_step = 0.0;

  if (pen.lambda == 0.0) {
    // no penalty: every row is fitted on its own (minimum-norm interpolation)
    Matrix beta(n, p);
    for (int i = 0; i < n; ++i) {
      const double nx = data.x.row(i).squaredNorm();
      beta.row(i) = nx > 0.0 ? Eigen::RowVectorXd(data.x.row(i) * (data.y(i) / nx)) : Eigen::RowVectorXd::Zero(p);
    }
    const KktReport kkt = kkt_residuals(data, beta, pen);
    best.path = CoefficientPath::from_beta(beta);
    best.objective_value = objective(data, beta, pen);
    best.active_set = changes_of(beta);
    best.kkt_max_violation = kkt.max_violation;
    best.scores = kkt.scores;
    best.converged = kkt.max_violation <= cfg.kkt_tol;
    best.objective_trace = {best.objective_value};
    return best;
  }

  BarrierProblem prob(data, pen);
  Matrix beta;
  if (cfg.warm_start) {
    check_dims(data, cfg.warm_start->beta);
    beta = cfg.warm_start->beta;
  } else {
    // pooled least squares as a neutral start
    const Vector coef = data.x.colPivHouseholderQr().solve(data.y);
    beta = CoefficientPath::constant(n, coef).beta;
  }
  const double m = prob.degree();
  double t = m / (1.0 + objective(data, beta, pen));
  constexpr double growth = 10.0;
  const double scale = 1.0 + data.y.cwiseAbs().sum();

  Matrix step;
  Vector scores;
  int newton_steps = 0;
  bool accepted = false;
  for (int stage = 0; stage < 40 && newton_steps < cfg.max_iter; ++stage) {
    for (int it = 0; it < 200 && newton_steps < cfg.max_iter; ++it) {
      const double dec = prob.newton(beta, t, step, scores);
      ++newton_steps;
      if (!std::isfinite(dec) || dec < 0.0) break;
      if (dec < 1e-9) {
        beta += step;
        break;
      }
      // Armijo backtracking; the damped step 1/(1 + sqrt(dec)) always
      // decreases a self-concordant function, so it is the floor.
      const double floor_step = 1.0 / (1.0 + std::sqrt(dec));
      const double f0 = prob.value(beta, t);
      double a = 1.0;
      while (a > floor_step && !(prob.value(beta + a * step, t) <= f0 - 0.25 * a * dec)) a *= 0.5;
      beta += std::max(a, floor_step) * step;
    }
    const double f = objective(data, beta, pen);
    const double gap = m / t;
    if (gap <= cfg.barrier_identify_gap * (1.0 + std::abs(f))) {
      std::vector<char> active, tie;
      classify(data, beta, prob.cost(), t, quantile, active, tie);
      Certified c = certify_candidate(data, pen, beta, active, tie, scores, 200);
      const bool keep = c.objective < best.objective_value ||
                        (c.objective <= best.objective_value + 1e-9 * (1.0 + std::abs(best.objective_value)) &&
                         c.kkt.max_violation < best.kkt_max_violation);
      if (keep) {
        best.objective_value = std::min(best.objective_value, c.objective);
        best.active_set = changes_of(c.beta);
        best.path = CoefficientPath::from_beta(std::move(c.beta));
        best.kkt_max_violation = c.kkt.max_violation;
        best.scores = c.kkt.scores;
      }
      best.objective_trace.push_back(best.objective_value);
      if (keep && best.kkt_max_violation <= cfg.kkt_accept) {
        accepted = true;
        break;
      }
    }
    if (gap <= 1e-13 * scale) break;
    t *= growth;
  }
  if (!accepted) accepted = best.kkt_max_violation <= cfg.kkt_tol;
  best.iterations = newton_steps;
  best.converged = accepted;
  best.final_step = t;
  return best;
}

}  // namespace qfcp::detail
