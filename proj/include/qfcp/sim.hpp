#pragma once

// Monte Carlo study: scenarios x error laws x sample sizes x estimators x
// lambda rules, summarized per cell in the layout of the bias/MSE and the
// detection tables.
//
// A replication's dataset depends only on (seed, law, n, replication), so all
// estimators and rules of a cell see the same data. Work is spread over
// threads by replication and reduced in a fixed order, which keeps every
// output independent of the thread count.

#include "qfcp/dataset_io.hpp"
#include "qfcp/select.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qfcp {

enum class Estimator { qlasso, alasso, slasso };
enum class SelectionRule { as, k3, ms, bic };

inline std::string_view to_string(Estimator e) {
  switch (e) {
    case Estimator::qlasso: return "qlasso";
    case Estimator::alasso: return "alasso";
    case Estimator::slasso: return "slasso";
  }
  return "?";
}

inline Estimator parse_estimator(std::string_view s) {
  if (s == "qlasso") return Estimator::qlasso;
  if (s == "alasso") return Estimator::alasso;
  if (s == "slasso") return Estimator::slasso;
  throw std::invalid_argument("unknown estimator '" + std::string(s) + "'");
}

inline std::string_view to_string(SelectionRule r) {
  switch (r) {
    case SelectionRule::as: return "as";
    case SelectionRule::k3: return "k3";
    case SelectionRule::ms: return "ms";
    case SelectionRule::bic: return "bic";
  }
  return "?";
}

inline SelectionRule parse_selection(std::string_view s) {
  if (s == "as") return SelectionRule::as;
  if (s == "k3") return SelectionRule::k3;
  if (s == "ms") return SelectionRule::ms;
  if (s == "bic") return SelectionRule::bic;
  throw std::invalid_argument("unknown selection rule '" + std::string(s) + "'");
}

inline Pipeline pipeline_of(Estimator e) {
  switch (e) {
    case Estimator::qlasso: return Pipeline::fused;
    case Estimator::alasso: return Pipeline::adaptive;
    case Estimator::slasso: return Pipeline::squared;
  }
  return Pipeline::fused;
}

struct SimConfig {
  ScenarioName scenario = ScenarioName::paper_2d;
  std::vector<ErrorKind> distributions{ErrorKind::normal};
  /// Ignored by stock-synthetic, which has n = 251.
  std::vector<int> sizes{100};
  std::vector<Estimator> estimators{Estimator::qlasso};
  std::vector<SelectionRule> selections{SelectionRule::ms};
  int replications = 100;
  std::uint64_t seed = 1;
  double tau = 0.5;
  /// Oracle/BIC grid: grid_points log-spaced values on lambda_as(n) * [grid_lo, grid_hi].
  int grid_points = 16;
  double grid_lo = 0.01;
  double grid_hi = 0.5;
  /// 0 picks the hardware concurrency.
  int threads = 0;
  /// Keep per-index fitted values for quantile bands.
  bool keep_fitted = false;
  DetectorConfig detector;

  void validate() const {
    if (replications < 1) throw std::invalid_argument("replications must be >= 1");
    if (distributions.empty() || estimators.empty() || selections.empty())
      throw std::invalid_argument("distributions, estimators and selections must be nonempty");
    if (scenario == ScenarioName::custom) throw std::invalid_argument("simulations need paper-2d or stock-synthetic");
    if (scenario == ScenarioName::paper_2d) {
      if (sizes.empty()) throw std::invalid_argument("sizes must be nonempty");
      for (int n : sizes)
        if (n < 10) throw std::invalid_argument("paper-2d sizes must be >= 10");
    }
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("tau must lie in (0,1)");
    if (grid_points < 1 || !(grid_lo > 0.0) || !(grid_hi >= grid_lo)) throw std::invalid_argument("bad lambda grid");
    if (threads < 0) throw std::invalid_argument("threads must be >= 0");
    detector.validate();
  }

  [[nodiscard]] std::vector<int> effective_sizes() const {
    return scenario == ScenarioName::stock_synthetic ? std::vector<int>{251} : sizes;
  }
};

/// One estimator/rule on one replication.
struct ReplicationRecord {
  ErrorKind distribution = ErrorKind::normal;
  int n = 0;
  int replication = 0;
  Estimator estimator = Estimator::qlasso;
  SelectionRule selection = SelectionRule::ms;
  std::uint64_t data_seed = 0;
  std::string data_hash;
  double lambda = 0.0;
  double bias = 0.0;
  double mse = 0.0;
  ChangePointSet changes;
  std::optional<double> detection_error;
  bool converged = false;
  /// x_i' betahat_i, only with SimConfig::keep_fitted.
  std::vector<double> fitted;
};

/// Aggregates of one (distribution, estimator, n, selection) cell. Spreads are
/// standard deviations across replications (divisor R).
struct CellSummary {
  ErrorKind distribution = ErrorKind::normal;
  Estimator estimator = Estimator::qlasso;
  int n = 0;
  SelectionRule selection = SelectionRule::ms;
  int replications = 0;
  int converged = 0;
  double bias_mean = 0.0, bias_sd = 0.0;
  double mse_mean = 0.0, mse_sd = 0.0;
  double lambda_mean = 0.0, lambda_sd = 0.0;
  JumpSummary jumps;
  double detection_mean = 0.0, detection_sd = 0.0;
  /// Replications with at least as many estimates as true changes.
  int detection_count = 0;

  friend bool operator==(const CellSummary& a, const CellSummary& b) {
    return a.distribution == b.distribution && a.estimator == b.estimator && a.n == b.n && a.selection == b.selection &&
           a.replications == b.replications && a.converged == b.converged && a.bias_mean == b.bias_mean &&
           a.bias_sd == b.bias_sd && a.mse_mean == b.mse_mean && a.mse_sd == b.mse_sd &&
           a.lambda_mean == b.lambda_mean && a.lambda_sd == b.lambda_sd && a.jumps.min == b.jumps.min &&
           a.jumps.median == b.jumps.median && a.jumps.max == b.jumps.max && a.detection_mean == b.detection_mean &&
           a.detection_sd == b.detection_sd && a.detection_count == b.detection_count;
  }
};

struct SimReport {
  std::vector<CellSummary> cells;
  std::vector<ReplicationRecord> records;
};

namespace detail {

/// FNV-1a over the raw bytes of y and x.
inline std::string dataset_hash(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto eat = [&](const double* p, Eigen::Index count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p);
    for (std::size_t k = 0; k < static_cast<std::size_t>(count) * sizeof(double); ++k) {
      h ^= bytes[k];
      h *= 1099511628211ULL;
    }
  };
  eat(d.y.data(), d.y.size());
  eat(d.x.data(), d.x.size());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline ScenarioSpec scenario_for(const SimConfig& cfg, ErrorKind law, int n, std::uint64_t data_seed) {
  ScenarioSpec spec = cfg.scenario == ScenarioName::stock_synthetic ? build_stock_scenario(data_seed) : build_paper_scenario(n);
  spec.seed = data_seed;
  spec.errors = law;
  return spec;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace detail

/// Seed of the dataset for (law, n, replication); shared by all estimators.
inline std::uint64_t replication_seed(std::uint64_t base, ErrorKind law, int n, int rep) {
  auto rng = make_stream(base, static_cast<std::uint64_t>(law), static_cast<std::uint64_t>(n),
                         static_cast<std::uint64_t>(rep));
  return rng();
}

/// Every estimator and rule on one replication, in config order.
inline std::vector<ReplicationRecord> run_replication(const SimConfig& cfg, ErrorKind law, int n, int rep) {
  const std::uint64_t data_seed = replication_seed(cfg.seed, law, n, rep);
  const ScenarioSpec spec = detail::scenario_for(cfg, law, n, data_seed);
  const auto [data, truth] = sample_dataset(spec, cfg.tau);
  const int nn = data.n();
  const CoefficientPath star = truth.path(nn);
  const ChangePointSet true_changes(truth.change_indices(nn));
  const std::string hash = detail::dataset_hash(data);

  DetectorConfig dc = cfg.detector;
  dc.tau = cfg.tau;
  // heavy tails slow the solvers down; the cap is doubled
  if (law == ErrorKind::cauchy) dc.solver.max_iter *= 2;
  const std::vector<double> grid = default_grid(nn, cfg.grid_points, cfg.grid_lo, cfg.grid_hi);

  std::vector<ReplicationRecord> out;
  for (Estimator est : cfg.estimators) {
    const Pipeline pl = pipeline_of(est);
    for (SelectionRule rule : cfg.selections) {
      PipelineFit fit;
      switch (rule) {
        case SelectionRule::as: fit = run_pipeline(data, lambda_as(nn), pl, dc); break;
        case SelectionRule::k3: fit = lambda_for_k_changes(data, truth.num_changes(), pl, dc).fit; break;
        case SelectionRule::ms: fit = lambda_oracle_mse(data, truth, grid, pl, dc).fit; break;
        case SelectionRule::bic: fit = lambda_bic(data, grid, pl, dc).fit; break;
      }
      ReplicationRecord r;
      r.distribution = law;
      r.n = nn;
      r.replication = rep;
      r.estimator = est;
      r.selection = rule;
      r.data_seed = data_seed;
      r.data_hash = hash;
      r.lambda = fit.lambda;
      const CoefficientPath path = fit.path(nn);
      const PredictionMetrics m = prediction_metrics(star, path, data.x);
      r.bias = m.bias;
      r.mse = m.mse;
      r.changes = fit.changes;
      r.detection_error = detection_error(fit.changes, true_changes, nn);
      r.converged = fit.converged;
      if (cfg.keep_fitted) {
        const Vector f = path.predictions(data.x);
        r.fitted.assign(f.data(), f.data() + f.size());
      }
      out.push_back(std::move(r));
    }
  }
  return out;
}

inline CellSummary summarize_cell(const std::vector<const ReplicationRecord*>& recs) {
  if (recs.empty()) throw std::invalid_argument("empty cell");
  CellSummary c;
  const ReplicationRecord& first = *recs.front();
  c.distribution = first.distribution;
  c.estimator = first.estimator;
  c.n = first.n;
  c.selection = first.selection;
  c.replications = static_cast<int>(recs.size());
  std::vector<double> bias, mse, lam, det;
  std::vector<int> jumps;
  for (const auto* r : recs) {
    c.converged += r->converged ? 1 : 0;
    bias.push_back(r->bias);
    mse.push_back(r->mse);
    lam.push_back(r->lambda);
    jumps.push_back(static_cast<int>(r->changes.size()));
    if (r->detection_error) det.push_back(*r->detection_error);
  }
  c.bias_mean = detail::mean_of(bias);
  c.bias_sd = detail::sd_of(bias);
  c.mse_mean = detail::mean_of(mse);
  c.mse_sd = detail::sd_of(mse);
  c.lambda_mean = detail::mean_of(lam);
  c.lambda_sd = detail::sd_of(lam);
  c.jumps = jump_summary(jumps);
  c.detection_count = static_cast<int>(det.size());
  c.detection_mean = detail::mean_of(det);
  c.detection_sd = detail::sd_of(det);
  return c;
}

inline SimReport run_monte_carlo(const SimConfig& cfg) {
  cfg.validate();
  struct Task {
    ErrorKind law;
    int n;
    int rep;
  };
  std::vector<Task> tasks;
  for (ErrorKind law : cfg.distributions)
    for (int n : cfg.effective_sizes())
      for (int rep = 0; rep < cfg.replications; ++rep) tasks.push_back({law, n, rep});

  std::vector<std::vector<ReplicationRecord>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t t = next++; t < tasks.size(); t = next++) {
      try {
        results[t] = run_replication(cfg, tasks[t].law, tasks[t].n, tasks[t].rep);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned threads = cfg.threads > 0 ? static_cast<unsigned>(cfg.threads) : std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(tasks.size()));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  SimReport report;
  for (auto& r : results)
    for (auto& rec : r) report.records.push_back(std::move(rec));
  // cells in config order: law, n, estimator, rule
  for (ErrorKind law : cfg.distributions)
    for (int n : cfg.effective_sizes())
      for (Estimator est : cfg.estimators)
        for (SelectionRule rule : cfg.selections) {
          std::vector<const ReplicationRecord*> cell;
          for (const auto& rec : report.records)
            if (rec.distribution == law && rec.n == n && rec.estimator == est && rec.selection == rule)
              cell.push_back(&rec);
          report.cells.push_back(summarize_cell(cell));
        }
  return report;
}

// ---------------------------------------------------------------------------
// tables

enum class TableKind { estimation, detection };
enum class TableFormat { csv, text };

inline TableFormat parse_table_format(std::string_view s) {
  if (s == "csv") return TableFormat::csv;
  if (s == "text") return TableFormat::text;
  throw std::invalid_argument("unknown table format '" + std::string(s) + "'");
}

inline const std::vector<std::string>& table_columns(TableKind kind) {
  static const std::vector<std::string> estimation{
      "distribution", "estimator", "n",        "selection", "replications", "converged",
      "bias_mean",    "bias_sd",   "mse_mean", "mse_sd",    "lambda_mean",  "lambda_sd"};
  static const std::vector<std::string> detection{
      "distribution", "estimator",   "n",           "selection",      "replications",  "lambda_mean",
      "jumps_min",    "jumps_median", "jumps_max", "detection_mean", "detection_sd", "detection_count"};
  return kind == TableKind::estimation ? estimation : detection;
}

namespace detail {

inline std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::string> table_fields(const CellSummary& c, TableKind kind) {
  std::vector<std::string> f{std::string(to_string(c.distribution)), std::string(to_string(c.estimator)),
                             std::to_string(c.n), std::string(to_string(c.selection)),
                             std::to_string(c.replications)};
  if (kind == TableKind::estimation) {
    for (const auto& s : {std::to_string(c.converged), exact(c.bias_mean), exact(c.bias_sd), exact(c.mse_mean),
                          exact(c.mse_sd), exact(c.lambda_mean), exact(c.lambda_sd)})
      f.push_back(s);
  } else {
    for (const auto& s : {exact(c.lambda_mean), std::to_string(c.jumps.min), std::to_string(c.jumps.median),
                          std::to_string(c.jumps.max), exact(c.detection_mean), exact(c.detection_sd),
                          std::to_string(c.detection_count)})
      f.push_back(s);
  }
  return f;
}

inline std::string rounded(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

}  // namespace detail

/// CSV (exact values, one row per cell) or an aligned text table in the
/// paper's "mean (sd)" and "[min|median|max]" notation.
inline std::string emit_table(const SimReport& report, TableKind kind, TableFormat format) {
  std::ostringstream os;
  if (format == TableFormat::csv) {
    const auto& cols = table_columns(kind);
    for (std::size_t k = 0; k < cols.size(); ++k) os << (k ? "," : "") << cols[k];
    os << '\n';
    for (const auto& c : report.cells) {
      const auto f = detail::table_fields(c, kind);
      for (std::size_t k = 0; k < f.size(); ++k) os << (k ? "," : "") << f[k];
      os << '\n';
    }
    return os.str();
  }
  std::vector<std::vector<std::string>> rows;
  if (kind == TableKind::estimation) {
    rows.push_back({"dist", "estimator", "n", "select", "bias (sd)", "MSE (sd)", "avg lambda", "conv"});
    for (const auto& c : report.cells)
      rows.push_back({std::string(to_string(c.distribution)), std::string(to_string(c.estimator)), std::to_string(c.n),
                      std::string(to_string(c.selection)),
                      detail::rounded(c.bias_mean, 2) + " (" + detail::rounded(c.bias_sd, 2) + ")",
                      detail::rounded(c.mse_mean, 2) + " (" + detail::rounded(c.mse_sd, 2) + ")",
                      detail::rounded(c.lambda_mean, 4),
                      std::to_string(c.converged) + "/" + std::to_string(c.replications)});
  } else {
    rows.push_back({"dist", "estimator", "n", "select", "avg lambda", "jumps", "detection (sd)", "included"});
    for (const auto& c : report.cells)
      rows.push_back({std::string(to_string(c.distribution)), std::string(to_string(c.estimator)), std::to_string(c.n),
                      std::string(to_string(c.selection)), detail::rounded(c.lambda_mean, 4),
                      "[" + std::to_string(c.jumps.min) + "|" + std::to_string(c.jumps.median) + "|" +
                          std::to_string(c.jumps.max) + "]",
                      c.detection_count ? detail::rounded(c.detection_mean, 2) + " (" +
                                              detail::rounded(c.detection_sd, 2) + ")"
                                        : "-",
                      std::to_string(c.detection_count) + "/" + std::to_string(c.replications)});
  }
  std::vector<std::size_t> width(rows[0].size(), 0);
  for (const auto& r : rows)
    for (std::size_t k = 0; k < r.size(); ++k) width[k] = std::max(width[k], r[k].size());
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) {
      os << (k ? "  " : "");
      if (k < 4)
        os << std::left << std::setw(static_cast<int>(width[k])) << r[k];
      else
        os << std::right << std::setw(static_cast<int>(width[k])) << r[k];
    }
    os << '\n';
  }
  return os.str();
}

/// Inverse of the two CSV tables: cells are matched on their four keys and
/// must appear in both.
inline std::vector<CellSummary> parse_tables(const std::string& estimation_csv, const std::string& detection_csv) {
  auto parse = [](const std::string& text, TableKind kind) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::invalid_argument("missing table header");
    const auto header = detail::split_csv_line(line);
    if (header != table_columns(kind)) throw std::invalid_argument("unexpected table header");
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      auto f = detail::split_csv_line(line);
      if (f.size() != header.size()) throw std::invalid_argument("table row has " + std::to_string(f.size()) + " fields");
      rows.push_back(std::move(f));
    }
    return rows;
  };
  const auto est = parse(estimation_csv, TableKind::estimation);
  const auto det = parse(detection_csv, TableKind::detection);
  if (est.size() != det.size()) throw std::invalid_argument("tables list different cells");
  auto num = [](const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
    return v;
  };
  auto integer = [](const std::string& s) {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument("bad integer '" + s + "'");
    return v;
  };
  std::vector<CellSummary> cells;
  for (std::size_t r = 0; r < est.size(); ++r) {
    const auto& a = est[r];
    const auto& b = det[r];
    if (!std::equal(a.begin(), a.begin() + 5, b.begin())) throw std::invalid_argument("tables disagree on cell keys");
    CellSummary c;
    c.distribution = parse_error_kind(a[0]);
    c.estimator = parse_estimator(a[1]);
    c.n = integer(a[2]);
    c.selection = parse_selection(a[3]);
    c.replications = integer(a[4]);
    c.converged = integer(a[5]);
    c.bias_mean = num(a[6]);
    c.bias_sd = num(a[7]);
    c.mse_mean = num(a[8]);
    c.mse_sd = num(a[9]);
    c.lambda_mean = num(a[10]);
    c.lambda_sd = num(a[11]);
    if (num(b[5]) != c.lambda_mean) throw std::invalid_argument("tables disagree on lambda_mean");
    c.jumps = {integer(b[6]), integer(b[7]), integer(b[8])};
    c.detection_mean = num(b[9]);
    c.detection_sd = num(b[10]);
    c.detection_count = integer(b[11]);
    cells.push_back(c);
  }
  return cells;
}

// ---------------------------------------------------------------------------
// JSON and plot data

inline nlohmann::json to_json(const SimConfig& cfg) {
  nlohmann::json j;
  j["scenario"] = std::string(to_string(cfg.scenario));
  auto names = [](const auto& v) {
    auto a = nlohmann::json::array();
    for (const auto& e : v) a.push_back(std::string(to_string(e)));
    return a;
  };
  j["distributions"] = names(cfg.distributions);
  j["sizes"] = cfg.effective_sizes();
  j["estimators"] = names(cfg.estimators);
  j["selections"] = names(cfg.selections);
  j["replications"] = cfg.replications;
  j["seed"] = cfg.seed;
  j["tau"] = cfg.tau;
  j["grid"] = {{"points", cfg.grid_points}, {"lo_factor", cfg.grid_lo}, {"hi_factor", cfg.grid_hi}};
  j["detector"] = {{"gamma", cfg.detector.gamma}, {"refit", cfg.detector.refit},
                   {"solver", std::string(to_string(cfg.detector.solver.method))}};
  return j;
}

inline nlohmann::json to_json(const CellSummary& c) {
  return {{"distribution", std::string(to_string(c.distribution))},
          {"estimator", std::string(to_string(c.estimator))},
          {"n", c.n},
          {"selection", std::string(to_string(c.selection))},
          {"replications", c.replications},
          {"converged", c.converged},
          {"bias", {{"mean", c.bias_mean}, {"sd", c.bias_sd}}},
          {"mse", {{"mean", c.mse_mean}, {"sd", c.mse_sd}}},
          {"lambda", {{"mean", c.lambda_mean}, {"sd", c.lambda_sd}}},
          {"jumps", {{"min", c.jumps.min}, {"median", c.jumps.median}, {"max", c.jumps.max}}},
          {"detection", {{"mean", c.detection_mean}, {"sd", c.detection_sd}, {"count", c.detection_count}}}};
}

inline nlohmann::json to_json(const ReplicationRecord& r) {
  nlohmann::json j{{"distribution", std::string(to_string(r.distribution))},
                   {"n", r.n},
                   {"replication", r.replication},
                   {"estimator", std::string(to_string(r.estimator))},
                   {"selection", std::string(to_string(r.selection))},
                   {"data_seed", r.data_seed},
                   {"data_hash", r.data_hash},
                   {"lambda", r.lambda},
                   {"bias", r.bias},
                   {"mse", r.mse},
                   {"changes", r.changes.indices()},
                   {"converged", r.converged}};
  j["detection_error"] = r.detection_error ? nlohmann::json(*r.detection_error) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json report_json(const SimConfig& cfg, const SimReport& report) {
  nlohmann::json j;
  j["config"] = to_json(cfg);
  j["index_convention"] = "1-based; a change-point is the first index of the new phase";
  j["sd_convention"] = "standard deviation across replications, divisor R";
  auto cells = nlohmann::json::array();
  for (const auto& c : report.cells) cells.push_back(to_json(c));
  j["cells"] = cells;
  auto recs = nlohmann::json::array();
  for (const auto& r : report.records) recs.push_back(to_json(r));
  j["replications"] = recs;
  return j;
}

/// Per-index quartiles of the fitted values in each cell, next to the truth.
/// Needs records made with keep_fitted.
inline std::string emit_plotdata(const SimConfig& cfg, const SimReport& report) {
  std::ostringstream os;
  os << "distribution,estimator,n,selection,i,truth,q25,q50,q75\n";
  for (const auto& c : report.cells) {
    std::vector<const ReplicationRecord*> cell;
    for (const auto& r : report.records)
      if (r.distribution == c.distribution && r.n == c.n && r.estimator == c.estimator && r.selection == c.selection)
        cell.push_back(&r);
    if (cell.empty() || cell.front()->fitted.empty()) continue;
    const ScenarioSpec spec = detail::scenario_for(cfg, c.distribution, c.n, cell.front()->data_seed);
    ScenarioSpec clean = spec;
    clean.noise_scale = 0.0;
    const auto [data, truth] = sample_dataset(clean, cfg.tau);
    // the stock design is random, so its truth column is the first replication's
    const Vector signal = data.y;
    for (int i = 0; i < c.n; ++i) {
      std::vector<double> v;
      for (const auto* r : cell) v.push_back(r->fitted[static_cast<std::size_t>(i)]);
      std::sort(v.begin(), v.end());
      auto q = [&](double prob) {
        // type-7 quantile
        const double h = (static_cast<double>(v.size()) - 1.0) * prob;
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
      };
      os << to_string(c.distribution) << ',' << to_string(c.estimator) << ',' << c.n << ',' << to_string(c.selection)
         << ',' << i + 1 << ',' << detail::exact(signal(i)) << ',' << detail::exact(q(0.25)) << ','
         << detail::exact(q(0.5)) << ',' << detail::exact(q(0.75)) << '\n';
    }
  }
  return os.str();
}

}  // namespace qfcp
