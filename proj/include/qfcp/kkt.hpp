#pragma once

// Numerical optimality check for the (weighted) fused objective.
//
// With psi_k a subgradient of the loss at residual r_k (tau - 1{r_k < 0} for
// the check loss, r_k for the squared loss) and the suffix sums
//
//   S_j = sum_{k >= j} x_k psi_k,
//
// a path is optimal iff one common choice of psi satisfies
//
//   S_1 = 0                                   (beta_1 is unpenalized)
//   S_j = n lambda w_j theta_j / ||theta_j||  (theta_j != 0)
//   ||S_j|| <= n lambda w_j                   (theta_j == 0).
//
// At exact-tie observations (r_k == 0) psi_k may be anything in
// [tau - 1, tau]; the free scores are reconstructed segment by segment so the
// reported violation is the distance to the feasible set, not an artifact of
// a pointwise indicator convention.

#include "qfcp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace qfcp {

struct KktOptions {
  /// Residuals with |r| <= tie_tol * (1 + |y|) count as ties.
  double tie_tol = 1e-8;
  int refine_iterations = 3000;
};

struct KktReport {
  Vector per_index;  ///< normalized violation at each 1-based index (row i-1)
  double max_violation = 0.0;
  int worst_index = 0;  ///< 1-based; 0 when there is nothing to report
  Vector scores;        ///< the psi actually used
  int ties = 0;
};

namespace detail {

struct KktProblem {
  const Dataset& data;
  const PenaltySpec& pen;
  int n, p;
  std::vector<char> tie;
  std::vector<char> active;
  Matrix target;  // row j-1: required S_j for j == 1 or active j
  Vector cost;    // n lambda w_j (entry 0 unused)

  KktProblem(const Dataset& d, const Matrix& beta, const PenaltySpec& pn, const Vector& r, double tie_tol)
      : data(d), pen(pn), n(d.n()), p(d.p()), tie(n, 0), active(n, 0), target(Matrix::Zero(n, p)), cost(Vector::Zero(n)) {
    if (pen.loss == LossKind::quantile)
      for (int k = 0; k < n; ++k) tie[k] = std::abs(r(k)) <= tie_tol * (1.0 + std::abs(d.y(k)));
    for (int j = 1; j < n; ++j) {
      cost(j) = pen.group_cost(j + 1);
      const auto th = beta.row(j) - beta.row(j - 1);
      const double norm = th.norm();
      if (norm > 0.0) {
        active[j] = 1;
        target.row(j) = cost(j) * th / norm;
      }
    }
  }

  /// Rows j-1 hold S_j for the given scores.
  [[nodiscard]] Matrix suffix_sums(const Vector& psi) const {
    Matrix s(n, p);
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(p);
    for (int k = n - 1; k >= 0; --k) {
      acc += psi(k) * data.x.row(k);
      s.row(k) = acc;
    }
    return s;
  }

  [[nodiscard]] double violation(int j0, const Eigen::RowVectorXd& s) const {
    if (j0 == 0 || active[j0]) return (s - target.row(j0)).norm();
    return std::max(0.0, s.norm() - cost(j0));
  }
};

/// Segment [a, e] (0-based rows): ties inside it are adjusted so that the
/// equality at `a` holds given that S_{e+1} sits on its own target, then the
/// interior inequalities are enforced by projected gradient if needed.
inline void fit_segment_scores(const KktProblem& prob, int a, int e, Vector& psi, double lo, double hi, int max_iter) {
  std::vector<int> ties;
  for (int k = a; k <= e; ++k)
    if (prob.tie[k]) ties.push_back(k);
  if (ties.empty()) return;
  const int p = prob.p;
  const Eigen::RowVectorXd next = (e + 1 < prob.n) ? Eigen::RowVectorXd(prob.target.row(e + 1)) : Eigen::RowVectorXd::Zero(p);

  // Least-change solution of sum_{ties} x_k psi_k = g.
  Eigen::RowVectorXd g = prob.target.row(a) - next;
  for (int k = a; k <= e; ++k)
    if (!prob.tie[k]) g -= psi(k) * prob.data.x.row(k);
  const int m = static_cast<int>(ties.size());
  Matrix xt(m, p);
  Vector h(m);
  for (int t = 0; t < m; ++t) { xt.row(t) = prob.data.x.row(ties[t]); h(t) = psi(ties[t]); }
  const Vector gap = g.transpose() - xt.transpose() * h;
  const Vector z = Eigen::CompleteOrthogonalDecomposition<Matrix>(xt.transpose() * xt).solve(gap);
  h += xt * z;
  for (int t = 0; t < m; ++t) psi(ties[t]) = std::clamp(h(t), lo, hi);

  // Segment merit: squared equality error at a plus squared hinge inside.
  auto merit = [&](const Vector& ps, Matrix* grad_s) {
    double f = 0.0;
    Eigen::RowVectorXd acc = next;
    if (grad_s) grad_s->setZero(e - a + 1, p);
    for (int k = e; k >= a; --k) {
      acc += ps(k) * prob.data.x.row(k);
      if (k == a) {
        const Eigen::RowVectorXd d = acc - prob.target.row(a);
        f += d.squaredNorm();
        if (grad_s) grad_s->row(0) = 2.0 * d;
      } else {
        const double norm = acc.norm();
        const double over = norm - prob.cost(k);
        if (over > 0.0) {
          f += over * over;
          if (grad_s) grad_s->row(k - a) = 2.0 * over * acc / norm;
        }
      }
    }
    return f;
  };

  Matrix gs;
  double f = merit(psi, &gs);
  const double scale = 1.0 + prob.target.row(a).norm() + next.norm();
  if (f <= 1e-28 * scale * scale) return;

  double step = 1.0 / std::max(1.0, static_cast<double>(e - a + 1) * prob.data.x.cwiseAbs().maxCoeff() *
                                         prob.data.x.cwiseAbs().maxCoeff() * m);
  Vector grad(m);
  for (int it = 0; it < max_iter; ++it) {
    // d psi_k: sum over j <= k of x_k . dF/dS_j
    Eigen::RowVectorXd pref = Eigen::RowVectorXd::Zero(p);
    int t = 0;
    for (int k = a; k <= e; ++k) {
      pref += gs.row(k - a);
      if (t < m && ties[t] == k) { grad(t) = prob.data.x.row(k).dot(pref); ++t; }
    }
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      Vector trial = psi;
      for (int q = 0; q < m; ++q) trial(ties[q]) = std::clamp(psi(ties[q]) - step * grad(q), lo, hi);
      Matrix gt;
      const double ft = merit(trial, &gt);
      double moved = 0.0;
      for (int q = 0; q < m; ++q) moved += (trial(ties[q]) - psi(ties[q])) * grad(q);
      if (ft <= f + 0.25 * moved || ft < f * (1.0 - 1e-12)) {
        psi = std::move(trial);
        gs = std::move(gt);
        f = ft;
        accepted = true;
        step *= 1.5;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || f <= 1e-28 * scale * scale) break;
  }
}

}  // namespace detail

/// Optimality residuals of `beta` for the objective described by `pen`.
/// `score_hint` (for instance the dual variable of a solver) seeds the free
/// scores at ties; without it they start at the middle of their interval.
inline KktReport kkt_residuals(const Dataset& data, const Matrix& beta, const PenaltySpec& pen,
                               const std::optional<Vector>& score_hint = std::nullopt, const KktOptions& opts = {}) {
  check_dims(data, beta);
  pen.validate(data.n());
  const int n = data.n();
  const Vector r = residuals(data, beta);
  detail::KktProblem prob(data, beta, pen, r, opts.tie_tol);

  KktReport rep;
  Vector psi(n);
  const double lo = pen.tau - 1.0, hi = pen.tau;
  for (int k = 0; k < n; ++k) {
    if (pen.loss == LossKind::squared) psi(k) = r(k);
    else if (!prob.tie[k]) psi(k) = r(k) > 0.0 ? hi : lo;
    else {
      psi(k) = (score_hint && score_hint->size() == n) ? std::clamp((*score_hint)(k), lo, hi) : pen.tau - 0.5;
      ++rep.ties;
    }
  }

  if (rep.ties > 0) {
    // Segments start at index 1 and at every active index.
    int a = 0;
    for (int j = 1; j <= n; ++j) {
      if (j == n || prob.active[j]) {
        detail::fit_segment_scores(prob, a, j - 1, psi, lo, hi, opts.refine_iterations);
        a = j;
      }
    }
  }

  const Matrix s = prob.suffix_sums(psi);
  const double norm = pen.lambda > 0.0 ? n * pen.lambda : 1.0;
  rep.per_index.resize(n);
  for (int j = 0; j < n; ++j) {
    rep.per_index(j) = prob.violation(j, s.row(j)) / norm;
    if (rep.worst_index == 0 || rep.per_index(j) > rep.max_violation) {
      rep.max_violation = rep.per_index(j);
      rep.worst_index = j + 1;
    }
  }
  rep.scores = std::move(psi);
  return rep;
}

inline KktReport kkt_residuals(const Dataset& data, const CoefficientPath& path, const PenaltySpec& pen,
                               const std::optional<Vector>& score_hint = std::nullopt, const KktOptions& opts = {}) {
  return kkt_residuals(data, path.beta, pen, score_hint, opts);
}

}  // namespace qfcp
