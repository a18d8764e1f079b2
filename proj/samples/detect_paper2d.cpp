// Simulate the four-phase design, run both quantile pipelines and print what
// they find.

#include "qfcp/select.hpp"

#include <iostream>

int main(int argc, char** argv) {
  using namespace qfcp;
  const int n = argc > 1 ? std::atoi(argv[1]) : 200;
  auto spec = build_paper_scenario(n);
  spec.seed = 11;
  spec.errors = ErrorKind::student_t3;
  const auto [data, truth] = sample_dataset(spec, 0.5);
  std::cout << "true changes " << ChangePointSet(truth.change_indices(n)) << "\n";

  DetectorConfig cfg;
  cfg.refit = true;
  for (Pipeline pl : {Pipeline::fused, Pipeline::adaptive}) {
    const GridSelection sel = lambda_oracle_mse(data, truth, default_grid(n), pl, cfg);
    const PipelineFit& f = sel.fit;
    std::cout << to_string(pl) << ": lambda " << sel.lambda << ", changes " << f.changes << ", KKT "
              << f.fit.kkt_max_violation << "\n";
    for (int k = 0; k < f.segments.phases(); ++k) {
      const auto [from, to] = f.segments.phase_span(k, n);
      std::cout << "  " << from << ".." << to << ": " << f.segments.phase_coeffs[static_cast<std::size_t>(k)].transpose()
                << "\n";
    }
  }
}
