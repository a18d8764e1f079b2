#pragma once

// Types shared by the fused solvers, plus the step that turns an approximate
// iterate into an exactly piecewise-constant candidate and certifies it.

#include "qfcp/change_points.hpp"
#include "qfcp/kkt.hpp"
#include "qfcp/objective.hpp"
#include "qfcp/polish.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qfcp {

/// barrier: log-barrier Newton path following (default).
/// splitting: over-relaxed ADMM on the group copies.
enum class SolverMethod { barrier, splitting };

inline const char* to_string(SolverMethod m) { return m == SolverMethod::barrier ? "barrier" : "splitting"; }

struct SolverConfig {
  SolverMethod method = SolverMethod::barrier;
  /// Iteration cap (Newton steps for barrier, sweeps for splitting).
  int max_iter = 5000;
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  /// Initial augmented-Lagrangian step; residual balancing keeps it in [1e-4, 1e4].
  double penalty_step = 1.0;
  std::optional<CoefficientPath> warm_start;
  /// Loss scores of a previous fit; seeds both dual blocks.
  std::optional<Vector> warm_scores;

  double relaxation = 1.6;
  /// Iterations the (segmentation, tie set) structure must stay unchanged
  /// before it is polished; each structure is polished at most once.
  int stable_iterations = 20;
  /// A periodic candidate this close to optimal stops the iteration.
  double kkt_accept = 1e-8;
  /// Needed for `converged` once the residual criteria hold.
  double kkt_tol = 1e-5;
  /// Relative duality gap at which barrier iterates start being classified.
  double barrier_identify_gap = 1e-5;

  void validate() const {
    if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
    if (!(tol_primal > 0.0) || !(tol_dual > 0.0)) throw std::invalid_argument("tolerances must be positive");
    if (!(penalty_step > 0.0)) throw std::invalid_argument("penalty_step must be positive");
    if (stable_iterations < 1) throw std::invalid_argument("stable_iterations must be >= 1");
    if (!(kkt_accept > 0.0) || !(kkt_tol > 0.0)) throw std::invalid_argument("KKT tolerances must be positive");
    if (!(barrier_identify_gap > 0.0)) throw std::invalid_argument("barrier_identify_gap must be positive");
  }
};

struct FitResult {
  CoefficientPath path;
  double objective_value = std::numeric_limits<double>::infinity();
  int iterations = 0;
  bool converged = false;
  /// 1-based j >= 2 with beta_j != beta_{j-1} in the returned path.
  ChangePointSet active_set;
  double kkt_max_violation = std::numeric_limits<double>::infinity();
  /// Loss scores certifying the returned path.
  Vector scores;
  /// Best candidate objective after each check; non-increasing.
  std::vector<double> objective_trace;
  double final_step = 1.0;
};

namespace detail {

/// Candidate path: segment means moved (minimum norm) onto the tied
/// observations, or, where a segment's ties pin down its coefficients, the
/// interpolating vertex. The lower-objective variant wins.
inline Matrix candidate_path(const Dataset& data, const PenaltySpec& pen, const Matrix& beta,
                             const std::vector<char>& active, const std::vector<char>& tie) {
  const int n = data.n(), p = data.p();
  Matrix corrected(n, p), vertex(n, p);
  bool any_vertex = false;
  int a = 0;
  for (int j = 1; j <= n; ++j) {
    if (j < n && !active[j]) continue;
    const int e = j - 1;
    const Eigen::RowVectorXd phi = beta.middleRows(a, e - a + 1).colwise().mean();
    std::vector<int> ties;
    for (int k = a; k <= e; ++k)
      if (tie[k]) ties.push_back(k);
    Eigen::RowVectorXd phi_c = phi, phi_v = phi;
    if (!ties.empty()) {
      const int m = static_cast<int>(ties.size());
      Matrix xt(m, p);
      Vector yt(m);
      for (int t = 0; t < m; ++t) {
        xt.row(t) = data.x.row(ties[t]);
        yt(t) = data.y(ties[t]);
      }
      const Eigen::CompleteOrthogonalDecomposition<Matrix> cod(xt);
      phi_c += cod.solve(yt - xt * phi.transpose()).transpose();
      phi_v = phi_c;
      if (m >= p && cod.rank() == p) {
        const Vector sol = cod.solve(yt);
        if ((xt * sol - yt).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + yt.cwiseAbs().maxCoeff())) {
          phi_v = sol.transpose();
          any_vertex = true;
        }
      }
    }
    for (int k = a; k <= e; ++k) {
      corrected.row(k) = phi_c;
      vertex.row(k) = phi_v;
    }
    a = j;
  }
  if (!any_vertex) return corrected;
  return objective(data, vertex, pen) <= objective(data, corrected, pen) ? vertex : corrected;
}


struct Certified {
  Matrix beta;
  double objective = std::numeric_limits<double>::infinity();
  KktReport kkt;
};

/// Exactly piecewise-constant path for the segmentation `active` (0-based
/// rows starting a new segment) and tie set `tie`, polished when possible,
/// with its KKT report. `hint` seeds the scores at ties.
inline Certified certify_candidate(const Dataset& data, const PenaltySpec& pen, const Matrix& beta,
                                   const std::vector<char>& active, const std::vector<char>& tie, Vector hint,
                                   int refine_iterations) {
  const int n = data.n();
  Certified out;
  out.beta = candidate_path(data, pen, beta, active, tie);
  out.objective = objective(data, out.beta, pen);
  std::vector<int> starts{0};
  for (int j = 1; j < n; ++j)
    if (active[j]) starts.push_back(j);
  bool polished = false;
  if (auto pol = polish_segments(data, pen, starts, beta, tie, hint)) {
    const double pobj = objective(data, pol->beta, pen);
    if (pobj <= out.objective + 1e-12 * (1.0 + std::abs(out.objective))) {
      out.beta = std::move(pol->beta);
      out.objective = pobj;
      hint = std::move(pol->scores);
      polished = true;
    }
  }
  // polished scores are exact already
  KktOptions kopt;
  kopt.refine_iterations = polished ? 0 : refine_iterations;
  out.kkt = kkt_residuals(data, out.beta, pen, hint, kopt);
  return out;
}

/// 1-based indices j >= 2 with beta_j != beta_{j-1}.
inline ChangePointSet changes_of(const Matrix& beta) {
  std::vector<int> out;
  for (Eigen::Index j = 1; j < beta.rows(); ++j)
    if (beta.row(j) != beta.row(j - 1)) out.push_back(static_cast<int>(j) + 1);
  return ChangePointSet(std::move(out));
}

}  // namespace detail

}  // namespace qfcp
