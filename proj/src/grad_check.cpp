#include "bora/grad_check.hpp"

#include <cmath>

#include "bora/errors.hpp"

namespace bora {

GradCheckReport grad_check_detailed(const GradCheckProblem& problem,
                                    double step) {
  if (!(step > 0.0)) throw ContractError("grad_check: step must be positive");
  if (!problem.eval || !problem.analytic)
    throw ContractError("grad_check: eval and analytic must both be set");
  const std::vector<std::vector<double>> analytic = problem.analytic();
  if (analytic.size() != problem.params.size())
    throw ContractError("grad_check: analytic() returned " +
                        std::to_string(analytic.size()) + " gradients for " +
                        std::to_string(problem.params.size()) + " parameters");
  GradCheckReport report;
  for (std::size_t p = 0; p < problem.params.size(); ++p) {
    const auto& [name, buf] = problem.params[p];
    if (analytic[p].size() != buf->size())
      throw ContractError("grad_check: gradient size mismatch for " + name);
    double worst = 0.0;
    for (std::size_t i = 0; i < buf->size(); ++i) {
      const double saved = (*buf)[i];
      (*buf)[i] = saved + step;
      const double up = problem.eval();
      (*buf)[i] = saved - step;
      const double down = problem.eval();
      (*buf)[i] = saved;
      if (!std::isfinite(up) || !std::isfinite(down))
        throw NumericError("grad_check: objective is non-finite near " + name +
                           "[" + std::to_string(i) + "]");
      const double numeric = (up - down) / (2.0 * step);
      const double rel = std::abs(analytic[p][i] - numeric) /
                         std::max(1.0, std::abs(numeric));
      worst = std::max(worst, rel);
    }
    report.per_param.emplace_back(name, worst);
    report.max_rel_error = std::max(report.max_rel_error, worst);
  }
  return report;
}

double grad_check(const GradCheckProblem& problem, double step) {
  return grad_check_detailed(problem, step).max_rel_error;
}

}  // namespace bora
