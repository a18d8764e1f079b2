#pragma once

// Change-point estimation built on the fused solver.
//
// Stage 1 fits the plain quantile fused objective, reads the change-points off
// the support of the group differences and thins clusters of nearby estimates.
// Stage 2 refits with weights w_i = max(||theta_i||_inf, d_n)^(-gamma) taken
// from the thinned stage-1 path, so that differences stage 1 left at zero pay
// d_n^(-gamma) times the base penalty.

#include "qfcp/change_points.hpp"
#include "qfcp/model.hpp"
#include "qfcp/objective.hpp"
#include "qfcp/solver.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfcp {

enum class CoefficientSource { penalized, refit };

inline std::string_view to_string(CoefficientSource s) { return s == CoefficientSource::refit ? "refit" : "penalized"; }

/// Change-points plus one coefficient vector per phase. Phase k runs from
/// changes[k-1] (or 1) to changes[k] - 1 (or n).
struct SegmentedFit {
  ChangePointSet changes;
  std::vector<Vector> phase_coeffs;
  CoefficientSource source = CoefficientSource::penalized;

  [[nodiscard]] int phases() const { return static_cast<int>(phase_coeffs.size()); }

  void validate(int n) const {
    changes.validate(n);
    if (phase_coeffs.size() != changes.size() + 1) throw std::invalid_argument("need one phase per segment");
  }

  /// 1-based first and last index of phase k.
  [[nodiscard]] std::pair<int, int> phase_span(int k, int n) const {
    const int from = k == 0 ? 1 : changes[static_cast<std::size_t>(k - 1)];
    const int to = k + 1 < phases() ? changes[static_cast<std::size_t>(k)] - 1 : n;
    return {from, to};
  }

  [[nodiscard]] CoefficientPath path(int n) const {
    validate(n);
    const int p = phase_coeffs.empty() ? 0 : static_cast<int>(phase_coeffs[0].size());
    Matrix beta(n, p);
    for (int k = 0; k < phases(); ++k) {
      const auto [from, to] = phase_span(k, n);
      for (int i = from; i <= to; ++i) beta.row(i - 1) = phase_coeffs[static_cast<std::size_t>(k)].transpose();
    }
    return CoefficientPath::from_beta(std::move(beta));
  }
};

struct DetectorConfig {
  double tau = 0.5;
  double gamma = 1.0;
  /// Weight floor; n^(-1/2) when unset.
  std::optional<double> d_n;
  /// Cluster gap; ceil((log n)^2) when unset.
  std::optional<int> merge_gap;
  std::optional<int> k_max;
  bool refit = false;
  /// Minimal-spacing rate, n^(-1) (log n)^3 when unset. Reporting only.
  std::optional<double> delta_n;
  LossKind loss = LossKind::quantile;
  SolverConfig solver;

  [[nodiscard]] double d_n_for(int n) const { return d_n ? *d_n : 1.0 / std::sqrt(static_cast<double>(n)); }
  [[nodiscard]] int merge_gap_for(int n) const {
    if (merge_gap) return *merge_gap;
    const double l = std::log(static_cast<double>(n));
    return std::max(1, static_cast<int>(std::ceil(l * l)));
  }
  [[nodiscard]] double delta_n_for(int n) const {
    if (delta_n) return *delta_n;
    const double l = std::log(static_cast<double>(n));
    return l * l * l / n;
  }

  void validate() const {
    if (!(gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
    if (d_n && !(*d_n > 0.0)) throw std::invalid_argument("d_n must be positive");
    if (merge_gap && *merge_gap < 1) throw std::invalid_argument("merge gap must be >= 1");
    if (k_max && *k_max < 0) throw std::invalid_argument("K_max must be >= 0");
    if (delta_n && !(*delta_n > 0.0)) throw std::invalid_argument("delta_n must be positive");
    if (loss == LossKind::quantile && !(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
    solver.validate();
  }
};

struct AdaptiveWeights {
  Vector omega;  // entry 0 unused, kept at 1
  double b_n = 0.0;
};

inline ChangePointSet extract_change_points(const FitResult& fit) { return fit.active_set; }

/// Keeps t_j when t_j - t_{j-1} >= g, measured to the raw predecessor (t_0 = 1).
inline ChangePointSet merge_clustered(const ChangePointSet& changes, int g) {
  if (g < 1) throw std::invalid_argument("merge gap must be >= 1");
  std::vector<int> kept;
  int prev = 1;
  for (int t : changes) {
    if (t - prev >= g) kept.push_back(t);
    prev = t;
  }
  return ChangePointSet(std::move(kept));
}

/// Phase coefficients for `merged` read off a fitted path: each merged phase
/// takes the estimate of the last raw sub-segment it covers.
inline SegmentedFit segment_coefficients(const CoefficientPath& path, const ChangePointSet& raw,
                                         const ChangePointSet& merged) {
  const int n = path.n();
  merged.validate(n);
  for (int t : merged)
    if (!raw.contains(t)) throw std::invalid_argument("merged change " + std::to_string(t) + " is not a raw change");
  SegmentedFit out;
  out.changes = merged;
  for (std::size_t k = 0; k <= merged.size(); ++k) {
    const int last = k < merged.size() ? merged[k] - 1 : n;
    out.phase_coeffs.push_back(path.beta.row(last - 1).transpose());
  }
  return out;
}

inline SegmentedFit segment_coefficients(const FitResult& fit, const ChangePointSet& merged) {
  return segment_coefficients(fit.path, fit.active_set, merged);
}

inline AdaptiveWeights adaptive_weights(const SegmentedFit& stage1, int n, const DetectorConfig& cfg, double lambda) {
  cfg.validate();
  const double dn = cfg.d_n_for(n);
  const Matrix theta = stage1.path(n).theta;
  AdaptiveWeights w;
  w.omega = Vector::Ones(n);
  for (int i = 1; i < n; ++i) {
    const double m = std::max(theta.row(i).cwiseAbs().maxCoeff(), dn);
    w.omega(i) = std::pow(m, -cfg.gamma);
  }
  const double imin = stage1.changes.min_gap(n);
  w.b_n = n * lambda / imin + 1.0 / std::sqrt(imin);
  return w;
}

/// Single fused fit (all weights one) with its change-points.
struct FusedDetection {
  FitResult fit;
  ChangePointSet changes;
  SegmentedFit segments;
};

inline PenaltySpec base_penalty(const DetectorConfig& cfg, double lambda, int n) {
  return cfg.loss == LossKind::quantile ? PenaltySpec::quantile(lambda, cfg.tau, n) : PenaltySpec::squared(lambda, n);
}

inline FusedDetection detect_fused(const Dataset& data, double lambda, const DetectorConfig& cfg = {}) {
  cfg.validate();
  FusedDetection out;
  out.fit = solve(data, base_penalty(cfg, lambda, data.n()), cfg.solver);
  out.changes = extract_change_points(out.fit);
  out.segments = segment_coefficients(out.fit, out.changes);
  return out;
}

struct TwoStageDiagnostics {
  bool stage1_converged = false;
  bool stage2_converged = false;
  double stage1_kkt = 0.0;
  double stage2_kkt = 0.0;
  /// Merged stage-1 count exceeded K_max.
  bool k_max_exceeded = false;
  double d_n = 0.0;
  double b_n = 0.0;
  double delta_n = 0.0;
  /// lambda / (delta_n max(d_n, b_n)^gamma); should be small.
  double ratio_lambda_delta = 0.0;
  /// n lambda max(d_n, b_n)^(-gamma) / sqrt(I_max); should be large.
  double ratio_underfit = 0.0;
};

struct TwoStageResult {
  FitResult stage1_fit;
  ChangePointSet stage1_raw;
  SegmentedFit stage1;  // merged
  AdaptiveWeights weights;
  FitResult stage2_fit;
  SegmentedFit stage2;
  TwoStageDiagnostics diagnostics;
};

/// Per-phase unpenalized quantile regression.
inline SegmentedFit refit_segments(const Dataset& data, const ChangePointSet& changes, double tau,
                            const SolverConfig& cfg = {});

/// The refit, or nothing when some phase is shorter than p; the penalized
/// coefficients then stand.
inline std::optional<SegmentedFit> try_refit(const Dataset& data, const ChangePointSet& changes, double tau,
                                             const SolverConfig& cfg) {
  int prev = 1;
  for (std::size_t k = 0; k <= changes.size(); ++k) {
    const int next = k < changes.size() ? changes[k] : data.n() + 1;
    if (next - prev < data.p()) return std::nullopt;
    prev = next;
  }
  return refit_segments(data, changes, tau, cfg);
}

/// Stage 2 given any stage-1 segmentation; detect_two_stage feeds it the
/// merged stage-1 estimate.
inline TwoStageResult adaptive_stage(const Dataset& data, SegmentedFit stage1, double lambda2,
                                     const DetectorConfig& cfg) {
  const int n = data.n();
  TwoStageResult out;
  out.stage1 = std::move(stage1);
  out.weights = adaptive_weights(out.stage1, n, cfg, lambda2);
  const PenaltySpec pen = PenaltySpec::weighted(lambda2, cfg.tau, out.weights.omega, cfg.loss);
  out.stage2_fit = solve(data, pen, cfg.solver);
  out.stage2 = segment_coefficients(out.stage2_fit, extract_change_points(out.stage2_fit));
  if (cfg.refit && cfg.loss == LossKind::quantile)
    if (auto r = try_refit(data, out.stage2.changes, cfg.tau, cfg.solver)) out.stage2 = std::move(*r);

  auto& d = out.diagnostics;
  d.stage2_converged = out.stage2_fit.converged;
  d.stage2_kkt = out.stage2_fit.kkt_max_violation;
  d.k_max_exceeded = cfg.k_max && static_cast<int>(out.stage1.changes.size()) > *cfg.k_max;
  d.d_n = cfg.d_n_for(n);
  d.b_n = out.weights.b_n;
  d.delta_n = cfg.delta_n_for(n);
  const double m = std::pow(std::max(d.d_n, d.b_n), cfg.gamma);
  d.ratio_lambda_delta = lambda2 / (d.delta_n * m);
  d.ratio_underfit = n * lambda2 / m / std::sqrt(static_cast<double>(out.stage1.changes.max_gap(n)));
  return out;
}

inline TwoStageResult detect_two_stage(const Dataset& data, double lambda1, double lambda2,
                                       const DetectorConfig& cfg = {}) {
  cfg.validate();
  if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0)) throw std::invalid_argument("lambda must be >= 0");
  const int n = data.n();
  FusedDetection first = detect_fused(data, lambda1, cfg);
  const ChangePointSet merged = merge_clustered(first.changes, cfg.merge_gap_for(n));
  TwoStageResult out = adaptive_stage(data, segment_coefficients(first.fit, merged), lambda2, cfg);
  out.stage1_raw = first.changes;
  out.stage1_fit = std::move(first.fit);
  out.diagnostics.stage1_converged = out.stage1_fit.converged;
  out.diagnostics.stage1_kkt = out.stage1_fit.kkt_max_violation;
  return out;
}

inline SegmentedFit refit_segments(const Dataset& data, const ChangePointSet& changes, double tau,
                                   const SolverConfig& cfg) {
  data.validate();
  const int n = data.n(), p = data.p();
  changes.validate(n);
  SegmentedFit out;
  out.changes = changes;
  out.source = CoefficientSource::refit;
  for (std::size_t k = 0; k <= changes.size(); ++k) {
    const int from = k == 0 ? 1 : changes[k - 1];
    const int to = k < changes.size() ? changes[k] - 1 : n;
    const int len = to - from + 1;
    if (len < p)
      throw std::domain_error("phase " + std::to_string(k + 1) + " has " + std::to_string(len) +
                              " observations, fewer than p = " + std::to_string(p));
    out.phase_coeffs.push_back(
        quantile_regression(data.x.middleRows(from - 1, len), data.y.segment(from - 1, len), tau, cfg));
  }
  return out;
}

struct AssumptionReport {
  double max_row_norm = 0.0;
  bool a1_holds = false;
  /// Extreme eigenvalues of windowed second-moment matrices.
  double m0_hat = 0.0;
  double M0_hat = 0.0;
  int windows = 0;
  // with a known truth
  std::optional<double> min_jump;
  std::optional<double> max_jump;
  std::optional<int> i_min;
  std::optional<double> n_delta_n;
  std::optional<bool> a4_holds;
};

/// Windows run between up to 200 evenly spread endpoints and must hold at
/// least p rows.
inline AssumptionReport assumption_diagnostics(const Dataset& data, const std::optional<TrueSegmentation>& truth = {},
                                               std::optional<double> delta_n = {}) {
  data.validate();
  const int n = data.n(), p = data.p();
  AssumptionReport rep;
  rep.max_row_norm = data.x.rowwise().norm().maxCoeff();
  rep.a1_holds = rep.max_row_norm < 1.0;

  // prefix sums of x_i x_i'
  std::vector<Matrix> pref(static_cast<std::size_t>(n) + 1, Matrix::Zero(p, p));
  for (int i = 0; i < n; ++i) pref[i + 1] = pref[i] + data.x.row(i).transpose() * data.x.row(i);
  std::vector<int> ends;  // 0-based fence posts in [0, n]
  const int count = std::min(n + 1, 200);
  for (int q = 0; q < count; ++q) {
    const int e = count == 1 ? 0 : static_cast<int>(std::llround(static_cast<double>(q) * n / (count - 1)));
    if (ends.empty() || ends.back() != e) ends.push_back(e);
  }
  rep.m0_hat = std::numeric_limits<double>::infinity();
  rep.M0_hat = 0.0;
  for (std::size_t a = 0; a < ends.size(); ++a)
    for (std::size_t b = a + 1; b < ends.size(); ++b) {
      const int len = ends[b] - ends[a];
      if (len < p) continue;
      const Matrix m = (pref[ends[b]] - pref[ends[a]]) / static_cast<double>(len);
      Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
      rep.m0_hat = std::min(rep.m0_hat, es.eigenvalues()(0));
      rep.M0_hat = std::max(rep.M0_hat, es.eigenvalues()(p - 1));
      ++rep.windows;
    }
  if (rep.windows == 0) rep.m0_hat = 0.0;

  if (truth) {
    truth->validate();
    const double l = std::log(static_cast<double>(n));
    const double dn = delta_n ? *delta_n : l * l * l / n;
    for (std::size_t k = 1; k < truth->phase_coeffs.size(); ++k) {
      const double j = (truth->phase_coeffs[k] - truth->phase_coeffs[k - 1]).norm();
      rep.min_jump = rep.min_jump ? std::min(*rep.min_jump, j) : j;
      rep.max_jump = rep.max_jump ? std::max(*rep.max_jump, j) : j;
    }
    rep.i_min = truth->min_gap(n);
    rep.n_delta_n = n * dn;
    rep.a4_holds = *rep.i_min >= *rep.n_delta_n;
  }
  return rep;
}

}  // namespace qfcp
