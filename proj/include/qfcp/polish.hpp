#pragma once

// Exact solution of the fused problem once the segmentation and the set of
// interpolated observations are known.
//
// Fix segments with coefficients phi_0..phi_{S-1} starting at rows s_0 = 0 <
// s_1 < ... and a tie set T. Non-tie scores are fixed (tau or tau - 1 for the
// check loss, y_i - x_i' phi for the squared loss); tie scores are unknowns.
// Optimality then reads
//
//   x_i' phi_{seg(i)} = y_i                                   (i in T)
//   sum_{i in seg k} x_i psi_i = a_k - a_{k+1}                (k = 0..S-1)
//
// with a_k = c_{s_k} (phi_k - phi_{k-1}) / ||phi_k - phi_{k-1}|| and a_0 = a_S = 0,
// a square system solved here by damped Newton on a sparse LU. Around it runs
// a primal-dual active-set loop: tie scores outside [tau - 1, tau] release
// their tie, non-ties whose residual sign disagrees with their score become
// ties.

#include "qfcp/objective.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <Eigen/SparseQR>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

namespace qfcp::detail {

struct PolishProblem {
  const Dataset& data;
  const PenaltySpec& pen;
  std::vector<int> starts;  // 0-based first row of each segment
  std::vector<int> seg;     // segment of each row
  bool quantile;

  PolishProblem(const Dataset& d, const PenaltySpec& p, std::vector<int> s)
      : data(d), pen(p), starts(std::move(s)), seg(d.n()), quantile(p.loss == LossKind::quantile) {
    int k = 0;
    for (int i = 0; i < d.n(); ++i) {
      if (k + 1 < static_cast<int>(starts.size()) && starts[k + 1] == i) ++k;
      seg[i] = k;
    }
  }
  [[nodiscard]] int segments() const { return static_cast<int>(starts.size()); }
  [[nodiscard]] double cost_at(int k) const { return pen.group_cost(starts[k] + 1); }
  [[nodiscard]] int end_of(int k) const { return (k + 1 < segments()) ? starts[k + 1] : data.n(); }
  /// Ties a segment needs before the group term can pin the rest: the first
  /// and last segments leave the jump direction free, with p = 1 every
  /// segment is flat, and a lone segment is plain quantile regression.
  [[nodiscard]] int ties_needed(int k) const {
    const int p = data.p(), nseg = segments();
    const int need = (nseg == 1) ? p : ((p == 1 || k == 0 || k == nseg - 1) ? 1 : 0);
    return std::min(need, end_of(k) - starts[k]);
  }
};

enum class NewtonStatus { ok, singular, stalled, collapsed };

/// Newton on the square system for a fixed tie set. `psi` holds the scores of
/// every observation (ties are overwritten). On a singular Jacobian the
/// dependent unknowns (segment coefficients first, then tie scores) are
/// appended to `dependent`.
inline NewtonStatus newton_fixed_ties(const PolishProblem& prob, const std::vector<int>& ties, Matrix& phi,
                                      Vector& psi, std::vector<Eigen::Index>* dependent) {
  const Dataset& d = prob.data;
  const int p = d.p(), nseg = prob.segments(), m = static_cast<int>(ties.size());
  const int dim = nseg * p + m;
  const double scale = 1.0 + d.y.cwiseAbs().maxCoeff() + prob.pen.lambda * d.n() * prob.pen.weights.maxCoeff();

  auto evaluate = [&](const Matrix& ph, const Vector& ps, Vector& f, std::vector<Eigen::Triplet<double>>* jac) -> bool {
    f.setZero(dim);
    if (jac) jac->clear();
    for (int t = 0; t < m; ++t) {
      const int i = ties[t], k = prob.seg[i];
      f(t) = d.x.row(i).dot(ph.row(k)) - d.y(i);
      if (jac)
        for (int c = 0; c < p; ++c) jac->emplace_back(t, k * p + c, d.x(i, c));
    }
    // loss part of the stationarity rows
    std::vector<char> is_tie(d.n(), 0);
    for (int t = 0; t < m; ++t) is_tie[ties[t]] = 1;
    std::vector<Matrix> xx;
    if (!prob.quantile && jac) xx.assign(nseg, Matrix::Zero(p, p));
    for (int i = 0; i < d.n(); ++i) {
      const int k = prob.seg[i];
      double s = ps(i);
      if (!prob.quantile && !is_tie[i]) {
        s = d.y(i) - d.x.row(i).dot(ph.row(k));
        if (jac) xx[k].noalias() -= d.x.row(i).transpose() * d.x.row(i);
      }
      for (int c = 0; c < p; ++c) f(m + k * p + c) += d.x(i, c) * s;
    }
    if (jac) {
      for (int t = 0; t < m; ++t) {
        const int i = ties[t], k = prob.seg[i];
        for (int c = 0; c < p; ++c) jac->emplace_back(m + k * p + c, nseg * p + t, d.x(i, c));
      }
      if (!prob.quantile)
        for (int k = 0; k < nseg; ++k)
          for (int a = 0; a < p; ++a)
            for (int b = 0; b < p; ++b) jac->emplace_back(m + k * p + a, k * p + b, xx[k](a, b));
    }
    // group part: G_k -= a_k, G_{k-1} += a_k for each change k >= 1
    for (int k = 1; k < nseg; ++k) {
      const Eigen::RowVectorXd diff = ph.row(k) - ph.row(k - 1);
      const double norm = diff.norm();
      if (!(norm > 1e-14 * (1.0 + ph.row(k).norm()))) return false;
      const double c = prob.cost_at(k);
      const Eigen::RowVectorXd a = c * diff / norm;
      for (int q = 0; q < p; ++q) {
        f(m + k * p + q) -= a(q);
        f(m + (k - 1) * p + q) += a(q);
      }
      if (jac) {
        // da_k/dphi_k = H, da_k/dphi_{k-1} = -H
        const Matrix h = (c / norm) * (Matrix::Identity(p, p) - diff.transpose() * diff / (norm * norm));
        for (int q = 0; q < p; ++q)
          for (int r = 0; r < p; ++r) {
            const double v = h(q, r);
            if (v == 0.0) continue;
            jac->emplace_back(m + k * p + q, k * p + r, -v);
            jac->emplace_back(m + k * p + q, (k - 1) * p + r, v);
            jac->emplace_back(m + (k - 1) * p + q, k * p + r, v);
            jac->emplace_back(m + (k - 1) * p + q, (k - 1) * p + r, -v);
          }
      }
    }
    return true;
  };

  Vector f;
  std::vector<Eigen::Triplet<double>> trip;
  if (!evaluate(phi, psi, f, &trip)) return NewtonStatus::collapsed;
  double fnorm = f.norm();
  for (int it = 0; it < 40; ++it) {
    if (f.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) return NewtonStatus::ok;
    Eigen::SparseMatrix<double> jac(dim, dim);
    jac.setFromTriplets(trip.begin(), trip.end());
    jac.makeCompressed();
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(jac);
    Vector step;
    if (lu.info() == Eigen::Success) step = lu.solve(-f);
    const double limit = 1e8 * (1.0 + phi.cwiseAbs().maxCoeff());
    if (lu.info() != Eigen::Success || !step.allFinite() || step.norm() > limit) {
      // rank-deficient: report the dependent unknowns
      Eigen::SparseQR<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> qr;
      qr.setPivotThreshold(1e-10 * (1.0 + jac.coeffs().cwiseAbs().maxCoeff()));
      qr.compute(jac);
      if (qr.info() == Eigen::Success)
        for (Eigen::Index c = qr.rank(); c < dim; ++c) dependent->push_back(qr.colsPermutation().indices()(c));
      if (dependent->empty() && dim <= 300) {
        Eigen::ColPivHouseholderQR<Matrix> dqr{Matrix(jac)};
        dqr.setThreshold(1e-12);
        for (Eigen::Index c = dqr.rank(); c < dim; ++c) dependent->push_back(dqr.colsPermutation().indices()(c));
      }
      return NewtonStatus::singular;
    }
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
      Matrix ph = phi;
      Vector ps = psi;
      for (int k = 0; k < nseg; ++k)
        for (int c = 0; c < p; ++c) ph(k, c) += t * step(k * p + c);
      for (int q = 0; q < m; ++q) ps(ties[q]) += t * step(nseg * p + q);
      Vector ft;
      if (!evaluate(ph, ps, ft, nullptr)) continue;
      const double fn = ft.norm();
      if (fn < (1.0 - 1e-4 * t) * fnorm || fn <= 1e-13 * scale) {
        phi = std::move(ph);
        psi = std::move(ps);
        moved = true;
        break;
      }
    }
    if (!moved) return f.lpNorm<Eigen::Infinity>() <= 1e-9 * scale ? NewtonStatus::ok : NewtonStatus::stalled;
    evaluate(phi, psi, f, &trip);
    fnorm = f.norm();
  }
  return f.lpNorm<Eigen::Infinity>() <= 1e-9 * scale ? NewtonStatus::ok : NewtonStatus::stalled;
}

struct Polished {
  Matrix beta;
  Vector scores;
};

/// True when segment k's coefficients are not pinned by its ties together
/// with the curvature of the neighbouring group terms.
inline bool segment_underdetermined(const PolishProblem& prob, const Matrix& phi, const std::vector<char>& tie, int k) {
  const Dataset& d = prob.data;
  const int p = d.p(), nseg = prob.segments();
  std::vector<Eigen::RowVectorXd> rows;
  for (int i = prob.starts[k]; i < prob.end_of(k); ++i)
    if (tie[i]) rows.push_back(d.x.row(i));
  auto add_projector = [&](int j) {
    const Eigen::RowVectorXd diff = phi.row(j) - phi.row(j - 1);
    const double norm = diff.norm();
    if (!(norm > 0.0)) return;
    const Matrix h = Matrix::Identity(p, p) - diff.transpose() * diff / (norm * norm);
    for (int q = 0; q < p; ++q) rows.push_back(h.row(q));
  };
  if (k >= 1) add_projector(k);
  if (k + 1 < nseg) add_projector(k + 1);
  if (static_cast<int>(rows.size()) < p) return true;
  Matrix m(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t q = 0; q < rows.size(); ++q) m.row(static_cast<Eigen::Index>(q)) = rows[q];
  Eigen::ColPivHouseholderQR<Matrix> qr(m);
  qr.setThreshold(1e-9);
  return qr.rank() < p;
}

/// Polished path for the segmentation `starts`, starting from `beta` (rows
/// averaged per segment), candidate ties and scores. Empty when the active
/// set loop does not settle.

inline std::optional<Polished> polish_segments(const Dataset& data, const PenaltySpec& pen, std::vector<int> starts,
                                             const Matrix& beta, std::vector<char> tie, const Vector& hint) {
  PolishProblem prob(data, pen, std::move(starts));
  const int n = data.n(), p = data.p(), nseg = prob.segments();
  const double lo = pen.tau - 1.0, hi = pen.tau;

  Matrix phi(nseg, p);
  for (int k = 0; k < nseg; ++k) {
    const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
    phi.row(k) = beta.middleRows(a, e - a).colwise().mean();
  }

  Vector psi(n);
  if (prob.quantile) {
    const Vector r = data.y - (data.x.array() * beta.array()).rowwise().sum().matrix();
    for (int i = 0; i < n; ++i) {
      const double h = (hint.size() == n) ? hint(i) : pen.tau - 0.5;
      psi(i) = tie[i] ? std::clamp(h, lo, hi) : (r(i) > 0.0 ? hi : lo);
    }
    // a segment holds at most p ties; keep the ones with the most interior score
    for (int k = 0; k < nseg; ++k) {
      const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
      std::vector<int> seg_ties;
      for (int i = a; i < e; ++i)
        if (tie[i]) seg_ties.push_back(i);
      if (static_cast<int>(seg_ties.size()) <= p) continue;
      auto depth = [&](int i) { return std::min(psi(i) - lo, hi - psi(i)); };
      std::stable_sort(seg_ties.begin(), seg_ties.end(), [&](int u, int v) { return depth(u) > depth(v); });
      for (std::size_t q = p; q < seg_ties.size(); ++q) {
        const int i = seg_ties[q];
        tie[i] = 0;
        psi(i) = (psi(i) - lo > hi - psi(i)) ? hi : lo;
      }
    }
    // end segments need a tie to pin the direction the group term leaves
    // free; with p = 1 every segment does, and a lone segment needs p of them
    for (int k = 0; k < nseg; ++k) {
      const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
      const int need = prob.ties_needed(k);
      int have = 0;
      for (int i = a; i < e; ++i) have += tie[i];
      std::vector<int> cand;
      for (int i = a; i < e; ++i)
        if (!tie[i]) cand.push_back(i);
      auto absr = [&](int i) { return std::abs(data.y(i) - data.x.row(i).dot(phi.row(k))); };
      std::stable_sort(cand.begin(), cand.end(), [&](int u, int v) { return absr(u) < absr(v); });
      for (std::size_t q = 0; q < cand.size() && have < need; ++q, ++have) {
        tie[cand[q]] = 1;
        psi(cand[q]) = pen.tau - 0.5;
      }
    }
  } else {
    std::fill(tie.begin(), tie.end(), 0);
    psi.setZero();
  }

  int diagnoses = 0;
  for (int round = 0; round < 200; ++round) {
    if (prob.quantile) {
      for (int k = 0; k < nseg; ++k) {
        if (!segment_underdetermined(prob, phi, tie, k)) continue;
        int best_i = -1;
        double best_r = std::numeric_limits<double>::infinity();
        for (int i = prob.starts[k]; i < prob.end_of(k); ++i) {
          if (tie[i]) continue;
          const double r = std::abs(data.y(i) - data.x.row(i).dot(phi.row(k)));
          if (r < best_r) { best_r = r; best_i = i; }
        }
        if (best_i >= 0) {
          tie[best_i] = 1;
          psi(best_i) = pen.tau - 0.5;
        }
      }
    }
    std::vector<int> ties;
    for (int i = 0; i < n; ++i) {
      if (tie[i]) {
        ties.push_back(i);
      } else if (prob.quantile) {
        const double r = data.y(i) - data.x.row(i).dot(phi.row(prob.seg[i]));
        if (r != 0.0) psi(i) = r > 0.0 ? hi : lo;
      }
    }
    Matrix ph = phi;
    Vector ps = psi;
    std::vector<Eigen::Index> dependent;
    const NewtonStatus status = newton_fixed_ties(prob, ties, ph, ps, &dependent);
    if (status == NewtonStatus::singular && prob.quantile && !dependent.empty() && ++diagnoses <= 3) {
      // a segment coefficient left free gets the closest observation as a
      // tie; a free tie score is dropped
      bool changed = false;
      for (Eigen::Index col : dependent) {
        if (col >= nseg * p) {
          const int i = ties[col - nseg * p];
          tie[i] = 0;
          const double r = data.y(i) - data.x.row(i).dot(phi.row(prob.seg[i]));
          psi(i) = r >= 0.0 ? hi : lo;
          changed = true;
          continue;
        }
        const int k = static_cast<int>(col / p);
        const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
        int best_i = -1;
        double best_r = std::numeric_limits<double>::infinity();
        for (int i = a; i < e; ++i) {
          if (tie[i]) continue;
          const double r = std::abs(data.y(i) - data.x.row(i).dot(phi.row(k)));
          if (r < best_r) { best_r = r; best_i = i; }
        }
        if (best_i >= 0) {
          tie[best_i] = 1;
          psi(best_i) = pen.tau - 0.5;
          changed = true;
        }
      }
      if (changed) continue;
      return std::nullopt;
    }
    if (status != NewtonStatus::ok) return std::nullopt;
    if (!prob.quantile) {
      phi = std::move(ph);
      break;
    }

    int worst = -1;
    double worst_val = 1e-10;
    for (int i : ties) {
      const double out = std::max(ps(i) - hi, lo - ps(i));
      if (out > worst_val) { worst_val = out; worst = i; }
    }
    if (worst >= 0) {
      // pivot: leave the vertex along the edge that frees `worst`, up to the
      // first residual in its segment that reaches zero
      const int k = prob.seg[worst];
      const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
      std::vector<int> keep;
      for (int i = a; i < e; ++i)
        if (tie[i] && i != worst) keep.push_back(i);
      Matrix rows(static_cast<int>(keep.size()) + 1, p);
      Vector rhs = Vector::Zero(rows.rows());
      for (std::size_t q = 0; q < keep.size(); ++q) rows.row(static_cast<int>(q)) = data.x.row(keep[q]);
      rows.row(rows.rows() - 1) = data.x.row(worst);
      const bool above = ps(worst) > hi;
      if (static_cast<int>(keep.size()) >= prob.ties_needed(k)) {
        // the group term still pins the segment: just release
        tie[worst] = 0;
        ps(worst) = above ? hi : lo;
        phi = std::move(ph);
        psi = std::move(ps);
        continue;
      }
      rhs(rhs.size() - 1) = above ? -1.0 : 1.0;
      const Vector delta = Eigen::CompleteOrthogonalDecomposition<Matrix>(rows).solve(rhs);
      int enter = -1;
      double step = std::numeric_limits<double>::infinity();
      for (int i = a; i < e; ++i) {
        if (tie[i]) continue;
        const double r = data.y(i) - data.x.row(i).dot(ph.row(k));
        const double rate = -data.x.row(i).dot(delta);
        if (rate == 0.0 || (r > 0.0) == (rate > 0.0)) continue;
        const double t = -r / rate;
        if (t >= 0.0 && t < step) { step = t; enter = i; }
      }
      tie[worst] = 0;
      ps(worst) = above ? hi : lo;
      if (enter >= 0) {
        ph.row(k) += step * delta.transpose();
        tie[enter] = 1;
        ps(enter) = pen.tau - 0.5;
      }
      phi = std::move(ph);
      psi = std::move(ps);
      continue;
    }

    // scores are feasible; done unless the move flipped a residual sign, in
    // which case the worst flipped observation becomes a tie
    int flip = -1;
    double flip_val = 0.0;
    for (int i = 0; i < n; ++i) {
      if (tie[i]) continue;
      const double r = data.y(i) - data.x.row(i).dot(ph.row(prob.seg[i]));
      const double wrong = (ps(i) == hi) ? -r : r;
      if (wrong > flip_val) { flip_val = wrong; flip = i; }
    }
    phi = std::move(ph);
    psi = std::move(ps);
    if (flip < 0) break;
    const int k = prob.seg[flip];
    const int a = prob.starts[k], e = (k + 1 < nseg) ? prob.starts[k + 1] : n;
    int count = 0, out_i = -1;
    double shallow = std::numeric_limits<double>::infinity();
    for (int i = a; i < e; ++i) {
      if (!tie[i]) continue;
      ++count;
      const double depth = std::min(psi(i) - lo, hi - psi(i));
      if (depth < shallow) { shallow = depth; out_i = i; }
    }
    if (count >= p && out_i >= 0) tie[out_i] = 0;
    tie[flip] = 1;
    psi(flip) = pen.tau - 0.5;
    if (round == 199) return std::nullopt;
  }

  Polished out{Matrix(n, p), psi};
  for (int i = 0; i < n; ++i) out.beta.row(i) = phi.row(prob.seg[i]);
  if (!prob.quantile) out.scores = data.y - (data.x.array() * out.beta.array()).rowwise().sum().matrix();
  return out;
}

}  // namespace qfcp::detail
