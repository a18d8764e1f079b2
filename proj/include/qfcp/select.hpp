#pragma once

// Choosing lambda: the theory rate, a target number of changes, the truth
// oracle (simulation only) and BIC.

#include "qfcp/detect.hpp"
#include "qfcp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfcp {

/// fused: quantile loss, unit weights. adaptive: two-stage with
/// lambda1 = lambda2. squared: half squared loss, unit weights.
enum class Pipeline { fused, adaptive, squared };

inline std::string_view to_string(Pipeline p) {
  switch (p) {
    case Pipeline::fused: return "fused";
    case Pipeline::adaptive: return "adaptive";
    case Pipeline::squared: return "squared";
  }
  return "?";
}

inline Pipeline parse_pipeline(std::string_view s) {
  if (s == "fused") return Pipeline::fused;
  if (s == "adaptive") return Pipeline::adaptive;
  if (s == "squared") return Pipeline::squared;
  throw std::invalid_argument("unknown pipeline '" + std::string(s) + "'");
}

/// One pipeline run at one lambda.
struct PipelineFit {
  Pipeline pipeline = Pipeline::fused;
  double lambda = 0.0;
  /// Final change-points (stage 2 for the adaptive pipeline).
  ChangePointSet changes;
  /// Final coefficients; refitted per phase when the config asks for it and
  /// every phase has at least p rows.
  SegmentedFit segments;
  /// Last penalized fit.
  FitResult fit;
  std::optional<TwoStageResult> two_stage;
  bool converged = false;

  [[nodiscard]] CoefficientPath path(int n) const {
    return segments.source == CoefficientSource::refit ? segments.path(n) : fit.path;
  }
};

inline PipelineFit run_pipeline(const Dataset& data, double lambda, Pipeline pipeline, DetectorConfig cfg = {}) {
  PipelineFit out;
  out.pipeline = pipeline;
  out.lambda = lambda;
  if (pipeline == Pipeline::adaptive) {
    cfg.loss = LossKind::quantile;
    TwoStageResult r = detect_two_stage(data, lambda, lambda, cfg);
    out.changes = r.stage2.changes;
    out.segments = r.stage2;
    out.fit = r.stage2_fit;
    out.converged = r.diagnostics.stage1_converged && r.diagnostics.stage2_converged;
    out.two_stage = std::move(r);
    return out;
  }
  cfg.loss = pipeline == Pipeline::squared ? LossKind::squared : LossKind::quantile;
  FusedDetection d = detect_fused(data, lambda, cfg);
  out.changes = d.changes;
  out.segments = d.segments;
  if (cfg.refit && cfg.loss == LossKind::quantile)
    if (auto r = try_refit(data, d.changes, cfg.tau, cfg.solver)) out.segments = std::move(*r);
  out.converged = d.fit.converged;
  out.fit = std::move(d.fit);
  return out;
}

/// (log n)^(5/2) / n.
inline double lambda_as(double n) {
  if (!(n >= 2.0)) throw std::invalid_argument("lambda_as needs n >= 2");
  return std::pow(std::log(n), 2.5) / n;
}

struct KTargetResult {
  double lambda = 0.0;
  PipelineFit fit;
  /// Every (lambda, count) evaluated, in evaluation order.
  std::vector<std::pair<double, int>> evaluations;
  bool exact = false;
};

/// Bracket by powers of two (lambda_hi is the smallest one with no change,
/// lambda_lo = lambda_hi / 2^16), then bisect log lambda for the largest lambda
/// with at least K changes. When the count there is not K, the evaluated
/// lambda with count closest to K wins, larger lambda on ties.
inline KTargetResult lambda_for_k_changes(const Dataset& data, int k, Pipeline pipeline, const DetectorConfig& cfg = {},
                                          double ratio_tol = 1.01) {
  if (data.n() == 0) throw std::invalid_argument("empty data");
  if (k < 0) throw std::invalid_argument("K must be >= 0");
  KTargetResult out;
  std::map<double, PipelineFit> fits;
  auto count = [&](double lam) {
    auto it = fits.find(lam);
    if (it == fits.end()) {
      it = fits.emplace(lam, run_pipeline(data, lam, pipeline, cfg)).first;
      out.evaluations.emplace_back(lam, static_cast<int>(it->second.changes.size()));
    }
    return static_cast<int>(it->second.changes.size());
  };

  int e = 0;
  if (count(1.0) == 0) {
    while (e > -60 && count(std::ldexp(1.0, e - 1)) == 0) --e;
  } else {
    do ++e;
    while (e < 60 && count(std::ldexp(1.0, e)) > 0);
  }
  const double hi0 = std::ldexp(1.0, e);
  auto finish = [&](double lam) {
    out.lambda = lam;
    out.fit = fits.at(lam);
    out.exact = static_cast<int>(out.fit.changes.size()) == k;
    return out;
  };
  if (k == 0) return finish(hi0);

  double hi = hi0, lo = std::ldexp(1.0, e - 16);
  if (count(lo) >= k) {
    while (hi / lo > ratio_tol) {
      const double mid = std::sqrt(hi * lo);
      if (count(mid) >= k)
        lo = mid;
      else
        hi = mid;
    }
    if (count(lo) == k) return finish(lo);
  }
  // nearest count, larger lambda on ties; fits is ordered by lambda
  double best = hi0;
  int best_gap = std::abs(count(hi0) - k);
  for (auto it = fits.rbegin(); it != fits.rend(); ++it) {
    const int gap = std::abs(static_cast<int>(it->second.changes.size()) - k);
    if (gap < best_gap) {
      best_gap = gap;
      best = it->first;
    }
  }
  return finish(best);
}

struct GridSelection {
  double lambda = 0.0;
  PipelineFit fit;
  /// Criterion value per grid point, in grid order.
  std::vector<double> scores;
};

namespace detail {

inline void check_grid(const std::vector<double>& grid) {
  if (grid.empty()) throw std::invalid_argument("empty lambda grid");
  for (double l : grid)
    if (!(l >= 0.0) || !std::isfinite(l)) throw std::invalid_argument("lambda grid values must be finite and >= 0");
}

/// Minimizes `score` over the grid; ties go to the larger lambda.
template <class Score>
GridSelection select_on_grid(const Dataset& data, const std::vector<double>& grid, Pipeline pipeline,
                             const DetectorConfig& cfg, Score score) {
  check_grid(grid);
  GridSelection out;
  std::optional<std::size_t> best;
  std::vector<PipelineFit> fits;
  for (double lam : grid) {
    fits.push_back(run_pipeline(data, lam, pipeline, cfg));
    out.scores.push_back(score(fits.back()));
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    if (!best || out.scores[g] < out.scores[*best] || (out.scores[g] == out.scores[*best] && grid[g] > grid[*best]))
      best = g;
  }
  out.lambda = grid[*best];
  out.fit = std::move(fits[*best]);
  return out;
}

}  // namespace detail

/// Grid point minimizing the empirical MSE against the true path.
inline GridSelection lambda_oracle_mse(const Dataset& data, const TrueSegmentation& truth, const std::vector<double>& grid,
                                       Pipeline pipeline, const DetectorConfig& cfg = {}) {
  const int n = data.n();
  const CoefficientPath star = truth.path(n);
  return detail::select_on_grid(data, grid, pipeline, cfg, [&](const PipelineFit& f) {
    return prediction_metrics(star, f.path(n), data.x).mse;
  });
}

/// n log(L / n) + |changes| p log n, with L the pipeline's loss (check loss,
/// or half squared residuals for the squared pipeline).
inline double bic_value(const Dataset& data, const PipelineFit& f, const DetectorConfig& cfg) {
  const int n = data.n(), p = data.p();
  const Vector r = data.y - f.path(n).predictions(data.x);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < r.size(); ++i)
    loss += f.pipeline == Pipeline::squared ? 0.5 * r(i) * r(i) : check_loss(r(i), cfg.tau);
  const double per = std::max(loss / n, std::numeric_limits<double>::min());
  return n * std::log(per) + static_cast<double>(f.changes.size()) * p * std::log(static_cast<double>(n));
}

inline GridSelection lambda_bic(const Dataset& data, const std::vector<double>& grid, Pipeline pipeline,
                                const DetectorConfig& cfg = {}) {
  return detail::select_on_grid(data, grid, pipeline, cfg, [&](const PipelineFit& f) { return bic_value(data, f, cfg); });
}

/// `lo:hi:count[:log|:lin]`, log spacing by default. Returned ascending.
inline std::vector<double> parse_lambda_grid(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.size() != 3 && parts.size() != 4) throw std::invalid_argument("lambda grid must be lo:hi:count[:log|:lin]");
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != s.size() || s.empty()) throw std::invalid_argument("bad number '" + s + "' in lambda grid");
    return v;
  };
  const double lo = number(parts[0]), hi = number(parts[1]);
  const double cnt = number(parts[2]);
  const bool log_spaced = parts.size() == 3 || parts[3] == "log";
  if (parts.size() == 4 && parts[3] != "log" && parts[3] != "lin")
    throw std::invalid_argument("lambda grid spacing must be log or lin");
  if (cnt < 1 || cnt != std::floor(cnt)) throw std::invalid_argument("lambda grid count must be a positive integer");
  if (!(lo <= hi) || !(lo >= 0.0)) throw std::invalid_argument("lambda grid needs 0 <= lo <= hi");
  if (log_spaced && !(lo > 0.0)) throw std::invalid_argument("log-spaced lambda grid needs lo > 0");
  const int count = static_cast<int>(cnt);
  std::vector<double> grid;
  for (int g = 0; g < count; ++g) {
    const double f = count == 1 ? 0.0 : static_cast<double>(g) / (count - 1);
    grid.push_back(log_spaced ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo))) : lo + f * (hi - lo));
  }
  if (count > 1) grid.back() = hi;
  return grid;
}

/// Oracle/BIC grid used by the simulations: `count` log-spaced points on
/// lambda_as(n) * [lo_factor, hi_factor].
inline std::vector<double> default_grid(int n, int count = 16, double lo_factor = 0.01, double hi_factor = 0.5) {
  if (count < 1 || !(lo_factor > 0.0) || !(hi_factor >= lo_factor)) throw std::invalid_argument("bad default grid");
  const double a = lambda_as(n);
  std::vector<double> grid;
  for (int g = 0; g < count; ++g) {
    const double f = count == 1 ? 0.0 : static_cast<double>(g) / (count - 1);
    grid.push_back(a * std::exp(std::log(lo_factor) + f * (std::log(hi_factor) - std::log(lo_factor))));
  }
  return grid;
}

}  // namespace qfcp
