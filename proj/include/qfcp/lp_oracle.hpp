#pragma once

// Exact reference solutions for one-covariate (intercept-only) instances.
//
// With p = 1 both the check loss and the penalty are piecewise linear, so the
// problem is a linear program. Two independent routes are offered:
//
//  * exact = true: dynamic programming over convex piecewise-linear value
//    functions. V_1 = f_1 and V_i(b) = f_i(b) + min_b' V_{i-1}(b') + c_i |b - b'|;
//    the inner minimization clamps the slopes of V_{i-1} to [-c_i, c_i] and the
//    clamp points give the backtracking map b_{i-1} = clamp(b_i, L_i, U_i).
//  * exact = false: the LP itself, solved by a dense tableau simplex with
//    Bland's rule.

#include "qfcp/kkt.hpp"
#include "qfcp/objective.hpp"
#include "qfcp/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qfcp {

namespace detail {

/// Convex piecewise-linear function: slope `left` below the first knot, each
/// knot adds a positive slope increment.
struct PiecewiseLinear {
  double left = 0.0;
  std::vector<std::pair<double, double>> knots;  // (location, increment), sorted

  void add_knot(double at, double inc) {
    auto it = std::lower_bound(knots.begin(), knots.end(), at, [](const auto& k, double v) { return k.first < v; });
    if (it != knots.end() && it->first == at) it->second += inc;
    else knots.insert(it, {at, inc});
  }

  /// Clamps slopes to [-c, c]; returns the clamp interval (L, U).
  std::pair<double, double> clamp_slopes(double c) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    double lo = -inf, hi = inf;
    if (left < -c) {
      while (!knots.empty() && left + knots.front().second <= -c) {
        left += knots.front().second;
        lo = knots.front().first;
        knots.erase(knots.begin());
      }
      if (left < -c) {
        // the crossing knot stays, with a smaller increment
        lo = knots.front().first;
        knots.front().second -= (-c - left);
        left = -c;
      }
    }
    double right = left;
    for (const auto& k : knots) right += k.second;
    if (right > c) {
      while (!knots.empty() && right - knots.back().second >= c) {
        right -= knots.back().second;
        hi = knots.back().first;
        knots.pop_back();
      }
      if (right > c) {
        hi = knots.back().first;
        knots.back().second -= right - c;
      }
    }
    // drop knots that lost all their increment
    knots.erase(std::remove_if(knots.begin(), knots.end(), [](const auto& k) { return k.second <= 0.0; }), knots.end());
    return {lo, hi};
  }

  /// Leftmost minimizer.
  [[nodiscard]] double argmin() const {
    double s = left;
    if (s >= 0.0) throw std::runtime_error("value function is not coercive");
    for (const auto& k : knots) {
      s += k.second;
      if (s >= 0.0) return k.first;
    }
    throw std::runtime_error("value function is not coercive");
  }
};

inline std::vector<double> oracle_dynamic_program(const Dataset& data, const PenaltySpec& pen) {
  const int n = data.n();
  PiecewiseLinear v;
  std::vector<std::pair<double, double>> clamps(n);
  for (int i = 0; i < n; ++i) {
    if (i > 0) clamps[i] = v.clamp_slopes(pen.group_cost(i + 1));
    // f_i(b) = rho_tau(y_i - x_i b)
    const double x = data.x(i, 0), yi = data.y(i);
    v.left += std::min(-x * pen.tau, x * (1.0 - pen.tau));
    v.add_knot(yi / x, std::abs(x));
  }
  std::vector<double> b(n);
  b[n - 1] = v.argmin();
  for (int i = n - 1; i > 0; --i) b[i - 1] = std::clamp(b[i], clamps[i].first, clamps[i].second);
  return b;
}

/// min c'z subject to A z = rhs, z >= 0, rhs >= 0, starting from the given
/// feasible basis. Dense tableau, Bland's rule.
inline Vector simplex_bland(Matrix a, Vector rhs, const Vector& cost, std::vector<int> basis) {
  const int m = static_cast<int>(a.rows()), nv = static_cast<int>(a.cols());
  for (int it = 0; it < 100000; ++it) {
    // reduced costs
    Vector cb(m);
    for (int i = 0; i < m; ++i) cb(i) = cost(basis[i]);
    const Eigen::RowVectorXd reduced = cost.transpose() - cb.transpose() * a;
    int enter = -1;
    for (int j = 0; j < nv; ++j)
      if (reduced(j) < -1e-11) {
        enter = j;
        break;
      }
    if (enter < 0) {
      Vector z = Vector::Zero(nv);
      for (int i = 0; i < m; ++i) z(basis[i]) = rhs(i);
      return z;
    }
    int leave = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
      if (a(i, enter) > 1e-12) {
        const double ratio = rhs(i) / a(i, enter);
        if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && leave >= 0 && basis[i] < basis[leave])) {
          best = ratio;
          leave = i;
        }
      }
    }
    if (leave < 0) throw std::runtime_error("linear program is unbounded");
    const double piv = a(leave, enter);
    a.row(leave) /= piv;
    rhs(leave) /= piv;
    for (int i = 0; i < m; ++i) {
      if (i == leave) continue;
      const double f = a(i, enter);
      if (f != 0.0) {
        a.row(i) -= f * a.row(leave);
        rhs(i) -= f * rhs(leave);
      }
    }
    basis[leave] = enter;
  }
  throw std::runtime_error("simplex did not terminate");
}

inline std::vector<double> oracle_simplex(const Dataset& data, const PenaltySpec& pen) {
  const int n = data.n();
  // columns: theta+_1..n, theta-_1..n, u+_1..n, u-_1..n
  const int nv = 4 * n;
  Matrix a = Matrix::Zero(n, nv);
  Vector rhs(n), cost(nv);
  for (int j = 0; j < n; ++j) {
    const double c = j == 0 ? 0.0 : pen.group_cost(j + 1);
    cost(j) = c;
    cost(n + j) = c;
    cost(2 * n + j) = pen.tau;
    cost(3 * n + j) = 1.0 - pen.tau;
  }
  std::vector<int> basis(n);
  for (int i = 0; i < n; ++i) {
    const double sign = data.y(i) >= 0.0 ? 1.0 : -1.0;
    for (int s = 0; s <= i; ++s) {
      a(i, s) = sign * data.x(i, 0);
      a(i, n + s) = -sign * data.x(i, 0);
    }
    a(i, 2 * n + i) = sign;
    a(i, 3 * n + i) = -sign;
    rhs(i) = sign * data.y(i);
    basis[i] = sign > 0 ? 2 * n + i : 3 * n + i;
  }
  const Vector z = simplex_bland(std::move(a), std::move(rhs), cost, std::move(basis));
  std::vector<double> b(n);
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += z(j) - z(n + j);
    b[j] = acc;
  }
  return b;
}

}  // namespace detail

/// Reference optimum for p = 1, n <= 50. Used by the tests only.
inline FitResult lp_oracle_p1(const Dataset& data, const PenaltySpec& pen, bool exact = true) {
  data.validate();
  pen.validate(data.n());
  if (data.p() != 1) throw std::invalid_argument("lp oracle needs p = 1");
  if (data.n() > 50) throw std::invalid_argument("lp oracle is limited to n <= 50");
  if (pen.loss != LossKind::quantile) throw std::invalid_argument("lp oracle covers the check loss only");
  const int n = data.n();

  const std::vector<double> b = exact ? detail::oracle_dynamic_program(data, pen) : detail::oracle_simplex(data, pen);
  Matrix beta(n, 1);
  for (int i = 0; i < n; ++i) beta(i, 0) = b[i];
  if (!exact) {
    // snap simplex round-off so that unchanged neighbours are exactly equal
    const double scale = 1e-12 * (1.0 + beta.cwiseAbs().maxCoeff());
    for (int i = 1; i < n; ++i)
      if (std::abs(beta(i, 0) - beta(i - 1, 0)) <= scale) beta(i, 0) = beta(i - 1, 0);
  }

  FitResult fit;
  fit.path = CoefficientPath::from_beta(beta);
  fit.objective_value = objective(data, beta, pen);
  fit.iterations = 0;
  fit.converged = true;
  std::vector<int> changes;
  for (int i = 1; i < n; ++i)
    if (beta(i, 0) != beta(i - 1, 0)) changes.push_back(i + 1);
  fit.active_set = ChangePointSet(std::move(changes));
  const KktReport kkt = kkt_residuals(data, beta, pen);
  fit.kkt_max_violation = kkt.max_violation;
  fit.scores = kkt.scores;
  fit.objective_trace = {fit.objective_value};
  return fit;
}

}  // namespace qfcp
