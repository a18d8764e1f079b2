#pragma once

// JSON form of a detection run (schema/result.schema.json) and the way back
// to a coefficient path for re-verification.

#include "qfcp/dataset_io.hpp"
#include "qfcp/select.hpp"

#include <json.hpp>

#include <optional>
#include <stdexcept>
#include <string>

namespace qfcp {

inline constexpr const char* kResultSchema = "qfcp-result/1";

inline nlohmann::json phases_json(const SegmentedFit& seg, int n) {
  auto arr = nlohmann::json::array();
  for (int k = 0; k < seg.phases(); ++k) {
    const auto [from, to] = seg.phase_span(k, n);
    arr.push_back({{"from", from}, {"to", to}, {"coeffs", vector_to_json(seg.phase_coeffs[static_cast<std::size_t>(k)])}});
  }
  return arr;
}

/// Phases as a full n x p path; spans must tile 1..n in order.
inline CoefficientPath path_from_phases(const nlohmann::json& phases, int n, int p) {
  if (!phases.is_array() || phases.empty()) throw std::invalid_argument("phases must be a nonempty array");
  Matrix beta(n, p);
  int expect = 1;
  for (const auto& ph : phases) {
    const int from = ph.at("from").get<int>(), to = ph.at("to").get<int>();
    const Vector c = vector_from_json(ph.at("coeffs"));
    if (from != expect || to < from || to > n) throw std::invalid_argument("phases do not tile 1..n");
    if (c.size() != p) throw std::invalid_argument("phase has " + std::to_string(c.size()) + " coefficients, data has p = " + std::to_string(p));
    for (int i = from; i <= to; ++i) beta.row(i - 1) = c.transpose();
    expect = to + 1;
  }
  if (expect != n + 1) throw std::invalid_argument("phases do not cover all " + std::to_string(n) + " rows");
  return CoefficientPath::from_beta(std::move(beta));
}

struct ResultContext {
  std::string selection = "fixed";
  std::optional<double> target_k;
};

inline nlohmann::json detection_json(const Dataset& data, const PipelineFit& fit, const DetectorConfig& cfg,
                                     const ResultContext& ctx = {}) {
  const int n = data.n();
  nlohmann::json j;
  j["schema"] = kResultSchema;
  j["index_base"] = 1;
  j["n"] = n;
  j["p"] = data.p();
  j["tau"] = cfg.tau;
  j["loss"] = fit.pipeline == Pipeline::squared ? "squared" : "quantile";
  j["pipeline"] = std::string(to_string(fit.pipeline));
  j["selection"] = ctx.selection;
  j["lambda1"] = fit.lambda;
  j["lambda2"] = fit.pipeline == Pipeline::adaptive ? nlohmann::json(fit.lambda) : nlohmann::json(nullptr);
  j["changes"] = fit.changes.indices();

  const int gap = cfg.merge_gap_for(n);
  nlohmann::json weights = nullptr;
  nlohmann::json penalty_weights = nullptr;
  nlohmann::json conditions = nlohmann::json::object();
  if (fit.two_stage) {
    const TwoStageResult& r = *fit.two_stage;
    j["changes_stage1_raw"] = r.stage1_raw.indices();
    j["changes_stage1_merged"] = r.stage1.changes.indices();
    j["changes_stage2"] = r.stage2.changes.indices();
    const Vector& w = r.weights.omega;
    auto at = nlohmann::json::array();
    for (int t : r.stage1.changes) at.push_back({{"index", t}, {"omega", w(t - 1)}});
    weights = {{"min", w.tail(n - 1).minCoeff()}, {"max", w.tail(n - 1).maxCoeff()}, {"at_stage1_merged", at},
               {"d_n", r.diagnostics.d_n}, {"b_n", r.diagnostics.b_n}, {"gamma", cfg.gamma}};
    penalty_weights = vector_to_json(w);
    conditions = {{"k_max_exceeded", r.diagnostics.k_max_exceeded},
                  {"delta_n", r.diagnostics.delta_n},
                  {"ratio_lambda_delta", r.diagnostics.ratio_lambda_delta},
                  {"ratio_underfit", r.diagnostics.ratio_underfit},
                  {"stage1_converged", r.diagnostics.stage1_converged},
                  {"stage1_kkt", r.diagnostics.stage1_kkt}};
  } else {
    j["changes_stage1_raw"] = fit.changes.indices();
    j["changes_stage1_merged"] = merge_clustered(fit.changes, gap).indices();
    j["changes_stage2"] = nullptr;
  }
  j["merge_gap"] = gap;
  j["weights_summary"] = weights;
  j["penalty_weights"] = penalty_weights;
  j["coefficient_source"] = std::string(to_string(fit.segments.source));
  j["phases"] = phases_json(fit.segments, n);
  j["penalized_phases"] = phases_json(segment_coefficients(fit.fit, fit.changes), n);

  const AssumptionReport a = assumption_diagnostics(data);
  j["diagnostics"] = {{"kkt_max_violation", fit.fit.kkt_max_violation},
                      {"converged", fit.converged},
                      {"solver_iterations", fit.fit.iterations},
                      {"objective", fit.fit.objective_value},
                      {"a1_max_norm", a.max_row_norm},
                      {"a3_min_eigenvalue", a.m0_hat},
                      {"a3_max_eigenvalue", a.M0_hat},
                      {"conditions", conditions}};
  if (ctx.target_k) j["target_changes"] = *ctx.target_k;
  return j;
}

}  // namespace qfcp
