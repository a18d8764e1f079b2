#pragma once

// The `qfcp` command line: detect, simulate, verify, generate.
//
// Exit codes: 0 success, 2 bad input, 3 unconverged fit under --strict,
// 4 verification failure.

#include "qfcp/dataset_io.hpp"
#include "qfcp/kkt.hpp"
#include "qfcp/result_json.hpp"
#include "qfcp/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qfcp::cli {

enum ExitCode : int { ok = 0, bad_input = 2, not_converged = 3, verify_failed = 4 };

/// Problems with flags or input files.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write '" + path + "'");
  f << text;
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  if (out.empty()) throw InputError("empty list '" + s + "'");
  return out;
}

inline Dataset load_dataset(const std::string& path) {
  try {
    Dataset d = read_dataset_csv(path);
    d.validate();
    return d;
  } catch (const std::invalid_argument& e) {
    throw InputError(path + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw InputError(path + ": " + e.what());
  }
}

}  // namespace detail

struct DetectOptions {
  std::string input;
  double tau = 0.5;
  std::optional<double> lambda;
  std::string select;
  bool adaptive = false;
  bool squared = false;
  double gamma = 1.0;
  std::optional<int> merge_gap;
  bool refit = false;
  bool strict = false;
  std::string grid;
  std::string truth;
  std::string out;
  std::string solver = "barrier";
  std::optional<int> max_iter;
};

inline int cmd_detect(const DetectOptions& o, std::ostream& out, std::ostream& err) {
  if (!(o.tau > 0.0 && o.tau < 1.0)) throw InputError("--tau must lie in (0,1), got " + std::to_string(o.tau));
  if (o.lambda.has_value() == !o.select.empty()) throw InputError("give exactly one of --lambda or --select");
  if (o.lambda && !(*o.lambda >= 0.0)) throw InputError("--lambda must be >= 0");
  if (o.adaptive && o.squared) throw InputError("--adaptive and --squared exclude each other");
  const Dataset data = detail::load_dataset(o.input);
  const int n = data.n();

  DetectorConfig cfg;
  cfg.tau = o.tau;
  cfg.gamma = o.gamma;
  cfg.merge_gap = o.merge_gap;
  cfg.refit = o.refit;
  if (o.solver == "splitting")
    cfg.solver.method = SolverMethod::splitting;
  else if (o.solver != "barrier")
    throw InputError("--solver must be barrier or splitting");
  if (o.max_iter) cfg.solver.max_iter = *o.max_iter;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  const Pipeline pl = o.adaptive ? Pipeline::adaptive : (o.squared ? Pipeline::squared : Pipeline::fused);
  auto grid = [&] {
    try {
      return o.grid.empty() ? default_grid(n) : parse_lambda_grid(o.grid);
    } catch (const std::invalid_argument& e) {
      throw InputError(std::string("--lambda-grid: ") + e.what());
    }
  };

  PipelineFit fit;
  ResultContext ctx;
  if (o.lambda) {
    fit = run_pipeline(data, *o.lambda, pl, cfg);
  } else if (o.select == "as") {
    ctx.selection = "as";
    fit = run_pipeline(data, lambda_as(n), pl, cfg);
  } else if (o.select.rfind("k:", 0) == 0) {
    int k = -1;
    try {
      std::size_t used = 0;
      k = std::stoi(o.select.substr(2), &used);
      if (used != o.select.size() - 2) k = -1;
    } catch (const std::exception&) {
      k = -1;
    }
    if (k < 0) throw InputError("--select k:<K> needs a nonnegative integer K");
    ctx.selection = o.select;
    ctx.target_k = k;
    fit = lambda_for_k_changes(data, k, pl, cfg).fit;
  } else if (o.select == "bic") {
    ctx.selection = "bic";
    fit = lambda_bic(data, grid(), pl, cfg).fit;
  } else if (o.select == "ms") {
    if (o.truth.empty()) throw InputError("--select ms needs --truth (the true segmentation, JSON)");
    TrueSegmentation truth;
    try {
      truth = segmentation_from_json(nlohmann::json::parse(detail::read_text(o.truth)));
    } catch (const std::exception& e) {
      throw InputError("--truth: " + std::string(e.what()));
    }
    if (truth.p() != data.p()) throw InputError("--truth has p = " + std::to_string(truth.p()) + ", data has " + std::to_string(data.p()));
    ctx.selection = "ms";
    fit = lambda_oracle_mse(data, truth, grid(), pl, cfg).fit;
  } else {
    throw InputError("--select must be as, k:<K>, bic or ms");
  }

  const std::string text = detection_json(data, fit, cfg, ctx).dump(2) + "\n";
  if (o.out.empty())
    out << text;
  else
    detail::write_text(o.out, text);
  if (!fit.converged) {
    err << "warning: solver did not reach the KKT tolerance (max violation " << fit.fit.kkt_max_violation << ")\n";
    if (o.strict) return not_converged;
  }
  return ok;
}

struct SimulateOptions {
  std::string scenario = "paper-2d";
  std::string dist = "normal";
  std::string sizes = "100";
  int reps = 100;
  std::string estimators = "qlasso";
  std::string select = "ms";
  std::optional<std::uint64_t> seed;
  std::string outdir;
  int threads = 0;
  double tau = 0.5;
  int grid_points = 16;
  double grid_lo = 0.01;
  double grid_hi = 0.5;
  bool plotdata = false;
  bool refit = false;
};

inline SimConfig sim_config(const SimulateOptions& o) {
  SimConfig c;
  try {
    c.scenario = parse_scenario_name(o.scenario);
    c.distributions.clear();
    for (const auto& s : detail::split_list(o.dist)) c.distributions.push_back(parse_error_kind(s));
    c.sizes.clear();
    for (const auto& s : detail::split_list(o.sizes)) {
      std::size_t used = 0;
      c.sizes.push_back(std::stoi(s, &used));
      if (used != s.size()) throw std::invalid_argument("bad sample size '" + s + "'");
    }
    c.estimators.clear();
    for (const auto& s : detail::split_list(o.estimators)) c.estimators.push_back(parse_estimator(s));
    c.selections.clear();
    for (const auto& s : detail::split_list(o.select)) c.selections.push_back(parse_selection(s));
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  if (!o.seed) throw InputError("--seed is required");
  c.seed = *o.seed;
  c.replications = o.reps;
  c.threads = o.threads;
  c.tau = o.tau;
  c.grid_points = o.grid_points;
  c.grid_lo = o.grid_lo;
  c.grid_hi = o.grid_hi;
  c.keep_fitted = o.plotdata;
  c.detector.refit = o.refit;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(e.what());
  }
  return c;
}

inline int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream&) {
  const SimConfig cfg = sim_config(o);
  if (o.outdir.empty()) throw InputError("--outdir is required");
  std::error_code ec;
  std::filesystem::create_directories(o.outdir, ec);
  if (ec) throw InputError("cannot create '" + o.outdir + "': " + ec.message());
  const SimReport report = run_monte_carlo(cfg);
  const std::filesystem::path dir(o.outdir);
  detail::write_text((dir / "table2.csv").string(), emit_table(report, TableKind::estimation, TableFormat::csv));
  detail::write_text((dir / "table3.csv").string(), emit_table(report, TableKind::detection, TableFormat::csv));
  detail::write_text((dir / "report.json").string(), report_json(cfg, report).dump(2) + "\n");
  if (o.plotdata) detail::write_text((dir / "plotdata.csv").string(), emit_plotdata(cfg, report));
  out << emit_table(report, TableKind::estimation, TableFormat::text) << '\n'
      << emit_table(report, TableKind::detection, TableFormat::text);
  return ok;
}

struct VerifyOptions {
  std::string input;
  std::string result;
  double tau = 0.5;
  std::optional<double> lambda;
  double tolerance = 1e-4;
};

inline int cmd_verify(const VerifyOptions& o, std::ostream& out, std::ostream& err) {
  if (!(o.tau > 0.0 && o.tau < 1.0)) throw InputError("--tau must lie in (0,1)");
  if (!o.lambda || !(*o.lambda >= 0.0)) throw InputError("--lambda >= 0 is required");
  const Dataset data = detail::load_dataset(o.input);
  const int n = data.n(), p = data.p();
  nlohmann::json res;
  CoefficientPath path;
  PenaltySpec pen;
  try {
    res = nlohmann::json::parse(detail::read_text(o.result));
    if (res.value("schema", std::string()) != kResultSchema) throw std::invalid_argument("not a qfcp result file");
    if (res.at("n").get<int>() != n || res.at("p").get<int>() != p)
      throw std::invalid_argument("result is for n = " + std::to_string(res.at("n").get<int>()) + ", p = " +
                                  std::to_string(res.at("p").get<int>()) + ", data has n = " + std::to_string(n) +
                                  ", p = " + std::to_string(p));
    path = path_from_phases(res.contains("penalized_phases") ? res.at("penalized_phases") : res.at("phases"), n, p);
    const bool squared = res.value("loss", std::string("quantile")) == "squared";
    const auto& w = res.contains("penalty_weights") ? res.at("penalty_weights") : nlohmann::json(nullptr);
    if (!w.is_null()) {
      Vector weights = vector_from_json(w);
      if (weights.size() != n) throw std::invalid_argument("penalty_weights has the wrong length");
      pen = PenaltySpec::weighted(*o.lambda, o.tau, std::move(weights), squared ? LossKind::squared : LossKind::quantile);
    } else {
      pen = squared ? PenaltySpec::squared(*o.lambda, n) : PenaltySpec::quantile(*o.lambda, o.tau, n);
    }
    pen.validate(n);
  } catch (const InputError&) {
    throw;
  } catch (const std::exception& e) {
    throw InputError(o.result + ": " + e.what());
  }
  const KktReport rep = kkt_residuals(data, path, pen);
  if (rep.max_violation <= o.tolerance) {
    out << "ok: max KKT violation " << rep.max_violation << " <= " << o.tolerance << "\n";
    return ok;
  }
  err << "KKT violated: max " << rep.max_violation << " at index " << rep.worst_index << "\n";
  int listed = 0;
  for (int i = 0; i < n && listed < 50; ++i)
    if (rep.per_index(i) > o.tolerance) {
      err << "  index " << i + 1 << ": " << rep.per_index(i) << "\n";
      ++listed;
    }
  return verify_failed;
}

struct GenerateOptions {
  std::string scenario = "paper-2d";
  int n = 100;
  std::string dist = "normal";
  std::optional<std::uint64_t> seed;
  double noise = 1.0;
  double tau = 0.5;
  std::string out;
  std::string truth_out;
};

inline int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream&) {
  if (!o.seed) throw InputError("--seed is required");
  ScenarioSpec spec;
  try {
    const ScenarioName name = parse_scenario_name(o.scenario);
    if (name == ScenarioName::custom) throw std::invalid_argument("generate needs paper-2d or stock-synthetic");
    spec = name == ScenarioName::paper_2d ? build_paper_scenario(o.n) : build_stock_scenario(*o.seed);
    spec.seed = *o.seed;
    spec.errors = parse_error_kind(o.dist);
    spec.noise_scale = o.noise;
    if (!(o.noise >= 0.0)) throw std::invalid_argument("--noise must be >= 0");
  } catch (const std::exception& e) {
    throw InputError(e.what());
  }
  const auto [data, truth] = sample_dataset(spec, o.tau);
  std::ostringstream csv;
  write_dataset_csv(csv, data);
  if (o.out.empty())
    out << csv.str();
  else
    detail::write_text(o.out, csv.str());
  if (!o.truth_out.empty()) detail::write_text(o.truth_out, to_json(truth).dump(2) + "\n");
  return ok;
}

/// Full command line, argv[0] included.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Quantile fused change-point detection"};
  app.require_subcommand(1);

  DetectOptions d;
  auto* det = app.add_subcommand("detect", "Detect change-points in a CSV dataset (y,x1..xp)");
  det->add_option("--input", d.input, "Dataset CSV")->required();
  det->add_option("--tau", d.tau, "Quantile level in (0,1)")->required();
  det->add_option("--lambda", d.lambda, "Fixed tuning parameter");
  det->add_option("--select", d.select, "as | k:<K> | bic | ms");
  det->add_flag("--adaptive", d.adaptive, "Two-stage adaptive pipeline");
  det->add_flag("--squared", d.squared, "Squared-loss baseline");
  det->add_option("--gamma", d.gamma, "Adaptive weight exponent");
  det->add_option("--merge-gap", d.merge_gap, "Cluster gap for stage-1 merging");
  det->add_flag("--refit", d.refit, "Unpenalized per-phase refit");
  det->add_flag("--strict", d.strict, "Exit 3 when the solver does not converge");
  det->add_option("--lambda-grid", d.grid, "lo:hi:count[:log|:lin] for bic/ms");
  det->add_option("--truth", d.truth, "True segmentation JSON (needed by ms)");
  det->add_option("--out", d.out, "Result JSON path (stdout if omitted)");
  det->add_option("--solver", d.solver, "barrier | splitting");
  det->add_option("--max-iter", d.max_iter, "Solver iteration cap");

  SimulateOptions s;
  std::uint64_t seed_value = 0;
  auto* sim = app.add_subcommand("simulate", "Monte Carlo tables");
  sim->add_option("--scenario", s.scenario, "paper-2d | stock-synthetic");
  sim->add_option("--dist", s.dist, "normal,t3,cauchy");
  sim->add_option("--n", s.sizes, "Sample sizes, comma separated");
  sim->add_option("--reps", s.reps, "Replications per cell");
  sim->add_option("--estimators", s.estimators, "qlasso,alasso,slasso");
  sim->add_option("--select", s.select, "as,k3,ms,bic");
  auto* seed_opt = sim->add_option("--seed", seed_value, "Base seed")->required();
  sim->add_option("--outdir", s.outdir, "Output directory")->required();
  sim->add_option("--threads", s.threads, "Worker threads (0 = all cores)");
  sim->add_option("--tau", s.tau, "Quantile level");
  sim->add_option("--grid-points", s.grid_points, "Oracle/BIC grid size");
  sim->add_option("--grid-lo", s.grid_lo, "Grid low end as a multiple of lambda_AS");
  sim->add_option("--grid-hi", s.grid_hi, "Grid high end as a multiple of lambda_AS");
  sim->add_flag("--emit-plotdata", s.plotdata, "Write per-index quartile bands of fitted values");
  sim->add_flag("--refit", s.refit, "Use refitted phase coefficients in the metrics");

  VerifyOptions v;
  auto* ver = app.add_subcommand("verify", "Check a result against the optimality conditions");
  ver->add_option("--input", v.input, "Dataset CSV")->required();
  ver->add_option("--result", v.result, "Result JSON")->required();
  ver->add_option("--tau", v.tau, "Quantile level")->required();
  ver->add_option("--lambda", v.lambda, "Tuning parameter of the fit")->required();
  ver->add_option("--tolerance", v.tolerance, "Largest accepted normalized violation");

  GenerateOptions g;
  std::uint64_t gen_seed = 0;
  auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
  gen->add_option("--scenario", g.scenario, "paper-2d | stock-synthetic");
  gen->add_option("--n", g.n, "Sample size (paper-2d)");
  gen->add_option("--dist", g.dist, "normal | t3 | cauchy");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "Seed")->required();
  gen->add_option("--noise", g.noise, "Noise scale (0 for noiseless)");
  gen->add_option("--tau", g.tau, "Quantile level the errors are centred at");
  gen->add_option("--out", g.out, "CSV path (stdout if omitted)");
  gen->add_option("--truth-out", g.truth_out, "Write the true segmentation JSON here");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return bad_input;
  }

  try {
    if (*det) return cmd_detect(d, out, err);
    if (*sim) {
      if (*seed_opt) s.seed = seed_value;
      return cmd_simulate(s, out, err);
    }
    if (*ver) return cmd_verify(v, out, err);
    if (*gen) {
      if (*gen_seed_opt) g.seed = gen_seed;
      return cmd_generate(g, out, err);
    }
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return bad_input;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return bad_input;
  } catch (const std::domain_error& e) {
    err << "error: " << e.what() << "\n";
    return bad_input;
  }
  return bad_input;
}

}  // namespace qfcp::cli
