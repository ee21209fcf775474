#include "polyth/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace polyth {

double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check_scalar(const ScalarFn& objective, const std::vector<Tensor>& analytic,
                                  std::vector<Tensor> inputs, const GradCheckOptions& opts) {
  if (analytic.size() != inputs.size()) {
    throw std::invalid_argument("grad_check: " + std::to_string(analytic.size()) + " gradients for " +
                                std::to_string(inputs.size()) + " inputs");
  }
  std::mt19937_64 rng(opts.seed);
  GradCheckReport report;
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    if (analytic[t].empty()) continue;
    if (analytic[t].shape() != inputs[t].shape()) {
      throw std::invalid_argument("grad_check: gradient " + std::to_string(t) + " has shape " +
                                  shape_str(analytic[t].shape()) + ", input has " + shape_str(inputs[t].shape()));
    }
    std::vector<std::size_t> indices(inputs[t].size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
    if (opts.max_per_input != 0 && indices.size() > opts.max_per_input) {
      std::shuffle(indices.begin(), indices.end(), rng);
      indices.resize(opts.max_per_input);
      std::sort(indices.begin(), indices.end());
    }
    for (std::size_t i : indices) {
      const double saved = inputs[t][i];
      inputs[t][i] = saved + opts.step;
      const double plus = objective(inputs);
      inputs[t][i] = saved - opts.step;
      const double minus = objective(inputs);
      inputs[t][i] = saved;
      const double numeric = (plus - minus) / (2.0 * opts.step);
      const double err = relative_error(analytic[t][i], numeric, opts.floor);
      ++report.checked;
      if (report.checked == 1 || err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_input = t;
        report.worst_index = i;
        report.analytic = analytic[t][i];
        report.numeric = numeric;
      }
    }
  }
  return report;
}

GradCheckReport grad_check(const ForwardFn& forward, const BackwardFn& backward, std::vector<Tensor> inputs,
                           const GradCheckOptions& opts) {
  const Tensor probe = forward(inputs);
  std::mt19937_64 rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uniform(-1.0, 1.0);
  Tensor projection(probe.shape());
  for (double& v : projection.data()) v = uniform(rng);

  const std::vector<Tensor> analytic = backward(inputs, projection);
  const ScalarFn objective = [&](const std::vector<Tensor>& x) {
    const Tensor out = forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * projection[i];
    return s;
  };
  return grad_check_scalar(objective, analytic, std::move(inputs), opts);
}

}  // namespace polyth
