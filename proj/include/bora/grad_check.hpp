#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace bora {

// A scalar objective together with the parameter buffers it reads and a
// supplier of its analytic gradients. The checker perturbs the buffers in
// place (restoring them afterwards), so eval() must re-read them on each
// call, and analytic() must return one gradient array per parameter in the
// same order and shape as `params`.
struct GradCheckProblem {
  std::vector<std::pair<std::string, std::vector<double>*>> params;
  std::function<double()> eval;
  std::function<std::vector<std::vector<double>>()> analytic;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  // (parameter name, max relative error over its coordinates)
  std::vector<std::pair<std::string, double>> per_param;
};

// Central differences with the given step, compared coordinate-wise as
// |analytic - numeric| / max(1, |numeric|). Non-finite objective values
// raise NumericError.
GradCheckReport grad_check_detailed(const GradCheckProblem& problem,
                                    double step);
double grad_check(const GradCheckProblem& problem, double step);

}  // namespace bora
