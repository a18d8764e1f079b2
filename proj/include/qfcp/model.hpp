#pragma once

// Data model for the piecewise-constant-coefficient linear model
//
//   Y_i = x_i' beta_i + eps_i,   i = 1..n,
//
// with beta_i constant between change-points. Indices exposed through the
// public API are 1-based; Eigen storage is 0-based (row i-1 holds index i).

#include <Eigen/Dense>

#include <boost/math/distributions/cauchy.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qfcp {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Responses y and covariate rows x_i (row i-1 of `x`); column 0 is the
/// intercept constant c0.
struct Dataset {
  Vector y;
  Matrix x;

  Dataset() = default;
  Dataset(Vector y_, Matrix x_) : y(std::move(y_)), x(std::move(x_)) { validate(); }

  [[nodiscard]] int n() const { return static_cast<int>(y.size()); }
  [[nodiscard]] int p() const { return static_cast<int>(x.cols()); }
  [[nodiscard]] double intercept() const { return x(0, 0); }

  void validate() const {
    if (y.size() < 2) throw std::invalid_argument("dataset needs n >= 2 observations");
    if (x.rows() != y.size())
      throw std::invalid_argument("covariate rows (" + std::to_string(x.rows()) +
                                  ") do not match responses (" + std::to_string(y.size()) + ")");
    if (x.cols() < 1) throw std::invalid_argument("covariate rows must have p >= 1 entries");
    if (!y.allFinite() || !x.allFinite()) throw std::invalid_argument("dataset contains non-finite values");
    const double c0 = x(0, 0);
    if (c0 == 0.0) throw std::invalid_argument("intercept column must be a nonzero constant");
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      if (x(i, 0) != c0)
        throw std::invalid_argument("intercept column is not constant (row " + std::to_string(i + 1) + ")");
  }
};

/// theta_1 = beta_1, theta_j = beta_j - beta_{j-1}. Rows are observations.
inline Matrix theta_from_beta(const Matrix& beta) {
  if (beta.rows() == 0) throw std::invalid_argument("empty coefficient path");
  Matrix theta(beta.rows(), beta.cols());
  theta.row(0) = beta.row(0);
  for (Eigen::Index i = 1; i < beta.rows(); ++i) theta.row(i) = beta.row(i) - beta.row(i - 1);
  return theta;
}

/// Prefix sum; inverse of theta_from_beta.
inline Matrix beta_from_theta(const Matrix& theta) {
  if (theta.rows() == 0) throw std::invalid_argument("empty coefficient path");
  Matrix beta(theta.rows(), theta.cols());
  beta.row(0) = theta.row(0);
  for (Eigen::Index i = 1; i < theta.rows(); ++i) beta.row(i) = beta.row(i - 1) + theta.row(i);
  return beta;
}

/// beta_1..beta_n together with their consecutive differences.
struct CoefficientPath {
  Matrix beta;
  Matrix theta;

  CoefficientPath() = default;

  static CoefficientPath from_beta(Matrix beta) {
    CoefficientPath path;
    path.theta = theta_from_beta(beta);
    path.beta = std::move(beta);
    return path;
  }
  static CoefficientPath from_theta(Matrix theta) {
    CoefficientPath path;
    path.beta = beta_from_theta(theta);
    path.theta = std::move(theta);
    return path;
  }
  static CoefficientPath constant(int n, const Vector& coeffs) {
    Matrix beta(n, coeffs.size());
    for (int i = 0; i < n; ++i) beta.row(i) = coeffs.transpose();
    return from_beta(std::move(beta));
  }

  [[nodiscard]] int n() const { return static_cast<int>(beta.rows()); }
  [[nodiscard]] int p() const { return static_cast<int>(beta.cols()); }
  /// Fitted values x_i' beta_i.
  [[nodiscard]] Vector predictions(const Matrix& x) const { return (x.array() * beta.array()).rowwise().sum(); }
};

/// First index of the new phase for a change at rescaled location f.
inline int change_index_from_fraction(double f, int n) { return static_cast<int>(std::floor(f * n)) + 1; }

/// True piecewise-constant structure on the rescaled domain (0,1).
struct TrueSegmentation {
  std::vector<double> change_fractions;
  std::vector<Vector> phase_coeffs;

  void validate() const {
    if (phase_coeffs.size() != change_fractions.size() + 1)
      throw std::invalid_argument("need exactly one more phase than change-points");
    for (std::size_t k = 0; k < change_fractions.size(); ++k) {
      const double f = change_fractions[k];
      if (!(f > 0.0 && f < 1.0)) throw std::invalid_argument("change fractions must lie in (0,1)");
      if (k > 0 && !(f > change_fractions[k - 1]))
        throw std::invalid_argument("change fractions must be strictly increasing");
    }
    for (std::size_t k = 1; k < phase_coeffs.size(); ++k) {
      if (phase_coeffs[k].size() != phase_coeffs[0].size())
        throw std::invalid_argument("phase coefficient vectors differ in length");
      if (phase_coeffs[k] == phase_coeffs[k - 1])
        throw std::invalid_argument("adjacent phases must differ");
    }
  }

  [[nodiscard]] int p() const { return phase_coeffs.empty() ? 0 : static_cast<int>(phase_coeffs[0].size()); }
  [[nodiscard]] int num_changes() const { return static_cast<int>(change_fractions.size()); }

  /// 1-based first index of each new phase.
  [[nodiscard]] std::vector<int> change_indices(int n) const {
    std::vector<int> out;
    out.reserve(change_fractions.size());
    for (double f : change_fractions) out.push_back(change_index_from_fraction(f, n));
    return out;
  }

  /// Phase number (0-based) of 1-based observation index i.
  [[nodiscard]] int phase_of(int i, int n) const {
    int k = 0;
    for (int t : change_indices(n))
      if (i >= t) ++k;
    return k;
  }

  [[nodiscard]] CoefficientPath path(int n) const {
    Matrix beta(n, p());
    for (int i = 1; i <= n; ++i) beta.row(i - 1) = phase_coeffs[phase_of(i, n)].transpose();
    return CoefficientPath::from_beta(std::move(beta));
  }

  /// Minimal / maximal phase length (gaps t_k - t_{k-1} with t_0 = 1 and the
  /// closing boundary at n); n when there is no change.
  [[nodiscard]] int min_gap(int n) const {
    const auto idx = change_indices(n);
    if (idx.empty()) return n;
    int prev = 1, best = n;
    for (int t : idx) { best = std::min(best, t - prev); prev = t; }
    return std::min(best, n - prev);
  }
  [[nodiscard]] int max_gap(int n) const {
    const auto idx = change_indices(n);
    if (idx.empty()) return n;
    int prev = 1, best = 0;
    for (int t : idx) { best = std::max(best, t - prev); prev = t; }
    return std::max(best, n - prev);
  }
};

enum class ErrorKind { normal, student_t3, cauchy };

inline std::string_view to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::normal: return "normal";
    case ErrorKind::student_t3: return "t3";
    case ErrorKind::cauchy: return "cauchy";
  }
  return "?";
}

inline ErrorKind parse_error_kind(std::string_view s) {
  if (s == "normal" || s == "n") return ErrorKind::normal;
  if (s == "t3" || s == "student_t3") return ErrorKind::student_t3;
  if (s == "cauchy" || s == "c") return ErrorKind::cauchy;
  throw std::invalid_argument("unknown error distribution '" + std::string(s) + "'");
}

/// Analytic tau-quantile of the unshifted distribution.
inline double error_quantile(ErrorKind kind, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  if (tau == 0.5) return 0.0;
  switch (kind) {
    case ErrorKind::normal: return boost::math::quantile(boost::math::normal_distribution<>(0.0, 1.0), tau);
    case ErrorKind::student_t3: return boost::math::quantile(boost::math::students_t_distribution<>(3.0), tau);
    case ErrorKind::cauchy: return boost::math::quantile(boost::math::cauchy_distribution<>(0.0, 1.0), tau);
  }
  return 0.0;
}

/// Error law shifted so that P[eps < 0] = tau.
struct ErrorDistribution {
  ErrorKind kind = ErrorKind::normal;
  double tau_shift = 0.0;

  static ErrorDistribution make(ErrorKind kind, double tau) { return {kind, error_quantile(kind, tau)}; }

  template <class Rng>
  double sample(Rng& rng) const {
    double e = 0.0;
    switch (kind) {
      case ErrorKind::normal: e = std::normal_distribution<double>(0.0, 1.0)(rng); break;
      case ErrorKind::student_t3: e = std::student_t_distribution<double>(3.0)(rng); break;
      case ErrorKind::cauchy: e = std::cauchy_distribution<double>(0.0, 1.0)(rng); break;
    }
    return e - tau_shift;
  }
};

/// Deterministic RNG stream for (seed, stream id...). Distinct id tuples give
/// unrelated streams, so replications can be generated in any order.
template <class... Ids>
std::mt19937_64 make_stream(std::uint64_t seed, Ids... ids) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  (words.push_back(static_cast<std::uint32_t>(static_cast<std::uint64_t>(ids))), ...);
  (words.push_back(static_cast<std::uint32_t>(static_cast<std::uint64_t>(ids) >> 32)), ...);
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

enum class ScenarioName { paper_2d, stock_synthetic, custom };
enum class Design { ramp, gaussian };

inline std::string_view to_string(ScenarioName s) {
  switch (s) {
    case ScenarioName::paper_2d: return "paper-2d";
    case ScenarioName::stock_synthetic: return "stock-synthetic";
    case ScenarioName::custom: return "custom";
  }
  return "?";
}

inline ScenarioName parse_scenario_name(std::string_view s) {
  if (s == "paper-2d") return ScenarioName::paper_2d;
  if (s == "stock-synthetic") return ScenarioName::stock_synthetic;
  if (s == "custom") return ScenarioName::custom;
  throw std::invalid_argument("unknown scenario '" + std::string(s) + "'");
}

/// Everything needed to regenerate a synthetic dataset.
///
/// `design` selects the covariate rows: `ramp` gives x_i = (1, i/n) (p = 2),
/// `gaussian` gives x_i = (1, z_2, .., z_p) with standard normal z.
struct ScenarioSpec {
  ScenarioName name = ScenarioName::custom;
  int n = 0;
  ErrorKind errors = ErrorKind::normal;
  std::uint64_t seed = 0;
  double noise_scale = 1.0;
  Design design = Design::ramp;
  TrueSegmentation segmentation;
};

inline ScenarioSpec build_paper_scenario(int n) {
  if (n < 10) throw std::invalid_argument("paper-2d scenario needs n >= 10 (four phases)");
  ScenarioSpec spec;
  spec.name = ScenarioName::paper_2d;
  spec.n = n;
  spec.design = Design::ramp;
  spec.segmentation.change_fractions = {0.2, 0.5, 0.7};
  auto v = [](double a, double b) { Vector c(2); c << a, b; return c; };
  spec.segmentation.phase_coeffs = {v(0.0, 1.0), v(2.4, -6.0), v(-1.1, 2.0), v(0.5, 0.0)};
  return spec;
}

/// n = 251, p = 3 with changes at 83, 125 and 166. The third coefficient is
/// held at `third` throughout.
inline ScenarioSpec build_stock_scenario(std::uint64_t seed, double third = 1.0) {
  constexpr int n = 251;
  ScenarioSpec spec;
  spec.name = ScenarioName::stock_synthetic;
  spec.n = n;
  spec.seed = seed;
  spec.design = Design::gaussian;
  // Fractions chosen so that floor(f*n)+1 lands on 83, 125, 166.
  spec.segmentation.change_fractions = {82.5 / n, 124.5 / n, 165.5 / n};
  auto v = [third](double a, double b) { Vector c(3); c << a, b, third; return c; };
  spec.segmentation.phase_coeffs = {v(-1, -1), v(1, -1), v(1, 1), v(-1, 1)};
  return spec;
}

inline Matrix make_design(const ScenarioSpec& spec, int p) {
  const int n = spec.n;
  Matrix x(n, p);
  if (spec.design == Design::ramp) {
    if (p != 2) throw std::invalid_argument("ramp design has p = 2");
    for (int i = 1; i <= n; ++i) { x(i - 1, 0) = 1.0; x(i - 1, 1) = static_cast<double>(i) / n; }
    return x;
  }
  auto rng = make_stream(spec.seed, 0x636f76ULL);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    x(i, 0) = 1.0;
    for (int j = 1; j < p; ++j) x(i, j) = z(rng);
  }
  return x;
}

/// y_i = x_i' beta*_i + noise_scale * eps_i with eps shifted to have
/// tau-quantile zero. Deterministic in spec.seed.
inline std::pair<Dataset, TrueSegmentation> sample_dataset(const ScenarioSpec& spec, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
  spec.segmentation.validate();
  if (spec.n < 2) throw std::invalid_argument("scenario needs n >= 2");
  const int p = spec.segmentation.p();
  Matrix x = make_design(spec, p);
  const CoefficientPath truth = spec.segmentation.path(spec.n);
  Vector y = truth.predictions(x);
  if (spec.noise_scale != 0.0) {
    const auto law = ErrorDistribution::make(spec.errors, tau);
    auto rng = make_stream(spec.seed, 0x657272ULL);
    for (int i = 0; i < spec.n; ++i) y(i) += spec.noise_scale * law.sample(rng);
  }
  return {Dataset(std::move(y), std::move(x)), spec.segmentation};
}

}  // namespace qfcp
