// Solve one fused problem and check it against the optimality conditions,
// then break it on purpose.

#include "qfcp/solver.hpp"

#include <iostream>

int main() {
  using namespace qfcp;
  auto spec = build_paper_scenario(150);
  spec.seed = 3;
  const Dataset data = sample_dataset(spec, 0.3).first;
  const auto pen = PenaltySpec::quantile(0.01, 0.3, data.n());

  const FitResult fit = solve(data, pen);
  std::cout << "objective " << fit.objective_value << ", " << fit.active_set.size() << " changes, "
            << fit.iterations << " Newton steps, converged " << std::boolalpha << fit.converged << "\n";
  std::cout << "max KKT violation " << kkt_residuals(data, fit.path, pen).max_violation << "\n";

  Matrix moved = fit.path.beta;
  moved(0, 0) += 1.0;
  const KktReport bad = kkt_residuals(data, moved, pen);
  std::cout << "after moving beta_1: " << bad.max_violation << " (worst index " << bad.worst_index << ")\n";
}
