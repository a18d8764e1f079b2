#pragma once

// Alternating-direction proximal splitting for the (weighted) fused objective.
//
// In the beta parameterization the problem is
//
//   minimize  sum_k loss(r_k) + sum_{j>=2} c_j ||v_j||
//   subject to X beta + r = y,   D beta - v = 0,
//
// with c_j = n lambda w_j and (D beta)_j = beta_j - beta_{j-1}. The residual
// block goes through the loss prox, the group copies v through block
// soft-thresholding (zeros are exact), and the beta update solves
// (X'X + D'D) beta = rhs. That system is block tridiagonal and does not depend
// on the step, so it is factored once per problem.
//
// Every few iterations the iterate is turned into a candidate path: beta is
// averaged over the segments given by the support of v, then each segment is
// snapped onto the observations the loss prox put exactly at zero. The
// candidate is certified by its KKT residual, seeded with the scaled dual of
// the residual block.

#include "qfcp/fit.hpp"
#include "qfcp/prox.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <unordered_set>
#include <vector>

namespace qfcp::detail {


/// M = blockdiag(x_k x_k') + (path Laplacian) (x) I_p, via block Schur
/// complements C_1 = B_1, C_{k+1} = B_{k+1} - C_k^{-1}; stores G_k = C_k^{-1}.
class BlockTridiagonal {
 public:
  explicit BlockTridiagonal(const Matrix& x) : n_(static_cast<int>(x.rows())), p_(static_cast<int>(x.cols())) {
    g_.resize(static_cast<std::size_t>(n_) * p_ * p_);
    tmp_.resize(static_cast<std::size_t>(n_) * p_);
    Matrix prev_inv = Matrix::Zero(p_, p_);
    for (int k = 0; k < n_; ++k) {
      const double deg = (n_ == 1) ? 0.0 : ((k == 0 || k == n_ - 1) ? 1.0 : 2.0);
      Matrix c = x.row(k).transpose() * x.row(k);
      c.diagonal().array() += deg;
      if (k > 0) c -= prev_inv;
      Eigen::LLT<Matrix> llt(c);
      if (llt.info() != Eigen::Success) throw std::runtime_error("coupling system is not positive definite");
      prev_inv = llt.solve(Matrix::Identity(p_, p_));
      std::copy(prev_inv.data(), prev_inv.data() + p_ * p_, g_.begin() + static_cast<std::ptrdiff_t>(k) * p_ * p_);
    }
  }

  /// Solves M z = b in place; b is n x p row-major.
  void solve(std::vector<double>& b) {
    const int p = p_;
    auto gemv = [p](const double* g, const double* w, double* out, bool add) {
      for (int a = 0; a < p; ++a) {
        double s = 0.0;
        for (int c = 0; c < p; ++c) s += g[a + c * p] * w[c];
        out[a] = add ? out[a] + s : s;
      }
    };
    for (int k = 0; k + 1 < n_; ++k)
      gemv(&g_[static_cast<std::size_t>(k) * p * p], &b[static_cast<std::size_t>(k) * p],
           &b[static_cast<std::size_t>(k + 1) * p], true);
    for (int k = 0; k < n_; ++k)
      gemv(&g_[static_cast<std::size_t>(k) * p * p], &b[static_cast<std::size_t>(k) * p],
           &tmp_[static_cast<std::size_t>(k) * p], false);
    std::copy(tmp_.end() - p, tmp_.end(), b.end() - p);
    for (int k = n_ - 2; k >= 0; --k) {
      double* z = &b[static_cast<std::size_t>(k) * p];
      gemv(&g_[static_cast<std::size_t>(k) * p * p], &b[static_cast<std::size_t>(k + 1) * p], z, false);
      for (int a = 0; a < p; ++a) z[a] += tmp_[static_cast<std::size_t>(k) * p + a];
    }
  }

 private:
  int n_, p_;
  std::vector<double> g_;
  std::vector<double> tmp_;
};

inline FitResult splitting_solve(const Dataset& data, const PenaltySpec& pen, const SolverConfig& cfg = {}) {
  const int n = data.n(), p = data.p();
  const bool quantile = pen.loss == LossKind::quantile;
  const auto np = static_cast<std::size_t>(n) * p;
  auto at = [p](int k, int c) { return static_cast<std::size_t>(k) * p + c; };

  std::vector<double> xs(np);
  for (int k = 0; k < n; ++k)
    for (int c = 0; c < p; ++c) xs[at(k, c)] = data.x(k, c);
  const double* y = data.y.data();

  std::vector<double> cost(n, 0.0);
  for (int j = 1; j < n; ++j) cost[j] = pen.group_cost(j + 1);

  BlockTridiagonal system(data.x);

  std::vector<double> beta(np, 0.0), v(np, 0.0), u2(np, 0.0), work(np), v_old(np), h(p);
  std::vector<double> r(n, 0.0), u1(n, 0.0), r_old(n);
  double rho = cfg.penalty_step;

  if (cfg.warm_start) {
    check_dims(data, cfg.warm_start->beta);
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < p; ++c) beta[at(k, c)] = cfg.warm_start->beta(k, c);
  }
  for (int k = 0; k < n; ++k) {
    double s = 0.0;
    for (int c = 0; c < p; ++c) s += xs[at(k, c)] * beta[at(k, c)];
    r[k] = y[k] - s;
  }
  for (int j = 1; j < n; ++j)
    for (int c = 0; c < p; ++c) v[at(j, c)] = beta[at(j, c)] - beta[at(j - 1, c)];
  if (cfg.warm_scores && cfg.warm_scores->size() == n) {
    // u1 = -psi / rho and u2_j = S_j / rho reproduce the certificate's duals.
    std::vector<double> acc(p, 0.0);
    for (int k = n - 1; k >= 0; --k) {
      const double psi = (*cfg.warm_scores)(k);
      u1[k] = -psi / rho;
      for (int c = 0; c < p; ++c) acc[c] += xs[at(k, c)] * psi;
      if (k >= 1)
        for (int c = 0; c < p; ++c) u2[at(k, c)] = acc[c] / rho;
    }
  }

  const double alpha = cfg.relaxation;
  const double y_norm = data.y.norm();
  const double sqrt_m = std::sqrt(static_cast<double>(n + (n - 1) * p));
  const double sqrt_np = std::sqrt(static_cast<double>(np));
  double rel_pri = cfg.tol_primal, rel_dual = cfg.tol_dual;
  constexpr double abs_tol = 1e-12;

  FitResult best;
  best.final_step = rho;
  bool accepted = false;

  std::uint64_t last_signature = 0;
  int stable = 0;
  std::unordered_set<std::uint64_t> tried;
  auto mix = [](std::uint64_t h, std::uint64_t v) {
    h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    return h;
  };

  int it = 0;
  auto evaluate_candidate = [&](double accept_level, int refine_iters) {
    Matrix b(n, p);
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < p; ++c) b(k, c) = beta[at(k, c)];
    std::vector<char> active(n, 0), tie(n, 0);
    std::vector<int> support;
    for (int j = 1; j < n; ++j) {
      for (int c = 0; c < p; ++c)
        if (v[at(j, c)] != 0.0) active[j] = 1;
      if (active[j]) support.push_back(j + 1);
    }
    if (quantile)
      for (int k = 0; k < n; ++k) tie[k] = r[k] == 0.0;
    Vector hint(n);
    for (int k = 0; k < n; ++k) hint(k) = -rho * u1[k];
    Certified c = certify_candidate(data, pen, b, active, tie, std::move(hint), refine_iters);
    const KktReport& kkt = c.kkt;
    const double obj = c.objective;
    Matrix cand = std::move(c.beta);
    const bool certified = kkt.max_violation <= accept_level;
    const double slack = 1e-9 * (1.0 + std::abs(best.objective_value));
    const bool keep = obj < best.objective_value ||
                      (obj <= best.objective_value + slack && kkt.max_violation < best.kkt_max_violation);
    if (keep) {
      best.path = CoefficientPath::from_beta(std::move(cand));
      best.objective_value = std::min(obj, best.objective_value);
      best.active_set = ChangePointSet(std::move(support));
      best.kkt_max_violation = kkt.max_violation;
      best.scores = kkt.scores;
      best.final_step = rho;
    }
    best.objective_trace.push_back(best.objective_value);
    return keep && certified;
  };

  for (it = 1; it <= cfg.max_iter; ++it) {
    // beta: (X'X + D'D) beta = X'(y - r - u1) + D'(v - u2)
    for (int k = 0; k < n; ++k) {
      const double s = y[k] - r[k] - u1[k];
      for (int c = 0; c < p; ++c) {
        const std::size_t idx = at(k, c);
        double d = xs[idx] * s;
        if (k >= 1) d += v[idx] - u2[idx];
        if (k + 1 < n) d -= v[idx + p] - u2[idx + p];
        work[idx] = d;
      }
    }
    beta.swap(work);
    system.solve(beta);

    // relaxed prox steps and dual ascent
    std::copy(r.begin(), r.end(), r_old.begin());
    std::copy(v.begin(), v.end(), v_old.begin());
    const double sigma = 1.0 / rho;
    double pri_sq = 0.0, ab_sq = 0.0, bz_sq = 0.0;
    std::uint64_t signature = 0;
    for (int k = 0; k < n; ++k) {
      double s = 0.0;
      for (int c = 0; c < p; ++c) s += xs[at(k, c)] * beta[at(k, c)];
      const double hk = alpha * s + (1.0 - alpha) * (y[k] - r[k]);
      const double w = y[k] - hk - u1[k];
      r[k] = quantile ? prox_check_loss(w, sigma, pen.tau) : prox_half_square(w, sigma);
      u1[k] += hk + r[k] - y[k];
      if (r[k] == 0.0) signature = mix(signature, static_cast<std::uint64_t>(k));
      const double pr = s + r[k] - y[k];
      pri_sq += pr * pr;
      ab_sq += s * s;
      bz_sq += r[k] * r[k];
    }
    for (int j = 1; j < n; ++j) {
      double* vj = &v[at(j, 0)];
      double* uj = &u2[at(j, 0)];
      for (int c = 0; c < p; ++c) {
        const double db = beta[at(j, c)] - beta[at(j - 1, c)];
        work[at(j, c)] = db;
        h[c] = alpha * db + (1.0 - alpha) * vj[c];
        vj[c] = h[c] + uj[c];
      }
      if (prox_group_norm_inplace(vj, p, cost[j] * sigma)) signature = mix(signature, static_cast<std::uint64_t>(n + j));
      for (int c = 0; c < p; ++c) {
        uj[c] += h[c] - vj[c];
        const double db = work[at(j, c)];
        pri_sq += (db - vj[c]) * (db - vj[c]);
        ab_sq += db * db;
        bz_sq += vj[c] * vj[c];
      }
    }

    // dual residual rho (X' dr - D' dv); X'u1 and D'u2 cancel at the optimum,
    // so the larger of the two sets the scale
    double dual_sq = 0.0, xu_sq = 0.0, du_sq = 0.0;
    for (int k = 0; k < n; ++k) {
      const double dr = r[k] - r_old[k];
      for (int c = 0; c < p; ++c) {
        const std::size_t idx = at(k, c);
        double d = xs[idx] * dr, du = 0.0;
        const double xu = xs[idx] * u1[k];
        if (k >= 1) {
          d -= v[idx] - v_old[idx];
          du += u2[idx];
        }
        if (k + 1 < n) {
          d += v[idx + p] - v_old[idx + p];
          du -= u2[idx + p];
        }
        dual_sq += d * d;
        xu_sq += xu * xu;
        du_sq += du * du;
      }
    }
    const double pri = std::sqrt(pri_sq);
    const double dual = rho * std::sqrt(dual_sq);
    const double eps_pri = sqrt_m * abs_tol + rel_pri * std::max({std::sqrt(ab_sq), std::sqrt(bz_sq), y_norm});
    const double eps_dual = sqrt_np * abs_tol + rel_dual * rho * std::sqrt(std::max(xu_sq, du_sq));

    stable = (signature == last_signature) ? stable + 1 : 0;
    last_signature = signature;

    if (pri <= eps_pri && dual <= eps_dual) {
      if (evaluate_candidate(cfg.kkt_tol, 3000)) {
        accepted = true;
        break;
      }
      rel_pri = std::max(rel_pri * 0.1, 1e-13);
      rel_dual = std::max(rel_dual * 0.1, 1e-13);
    } else if (stable == cfg.stable_iterations && tried.insert(signature).second) {
      if (evaluate_candidate(cfg.kkt_accept, 20)) {
        accepted = true;
        break;
      }
    }

    if (it % 10 == 0) {
      double factor = 1.0;
      if (pri > 10.0 * dual && rho < 1e4) factor = 2.0;
      else if (dual > 10.0 * pri && rho > 1e-4) factor = 0.5;
      if (factor != 1.0) {
        rho *= factor;
        for (auto& u : u1) u /= factor;
        for (auto& u : u2) u /= factor;
      }
    }
  }

  if (!accepted) accepted = evaluate_candidate(cfg.kkt_tol, 3000);
  best.iterations = std::min(it, cfg.max_iter);
  best.converged = accepted;
  return best;
}

}  // namespace qfcp::detail
