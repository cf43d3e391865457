#include "cycleground/numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "cycleground/errors.hpp"

namespace cycleground::numcore {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

std::vector<ParamGradCheck> GradCheckReport::worst(std::size_t count) const {
  std::vector<ParamGradCheck> sorted = params;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error > b.max_rel_error;
  });
  if (sorted.size() > count) sorted.resize(count);
  return sorted;
}

namespace {

double evaluate(const Objective& objective, const ParameterSet& params, GraphOptions options) {
  Graph graph(options);
  const double value = objective(graph, params).scalar();
  if (!std::isfinite(value)) {
    throw NumericError("grad_check: objective is not finite");
  }
  return value;
}

}  // namespace

GradCheckReport grad_check(const Objective& objective, ParameterSet& params, double eps,
                           GraphOptions options) {
  if (!(eps > 0.0)) {
    throw UsageError("grad_check: eps must be positive");
  }
  Graph graph(options);
  Var root = objective(graph, params);
  if (!std::isfinite(root.scalar())) {
    throw NumericError("grad_check: objective is not finite");
  }
  graph.backward(root);

  GradCheckReport report;
  for (auto& [name, value] : params) {
    ParamGradCheck entry{name, Shape::of(value)};
    const auto bound = graph.find_param(name);
    Matrix analytic = Matrix::Zero(value.rows(), value.cols());
    if (bound && bound->requires_grad()) analytic = bound->grad();

    for (Index i = 0; i < value.size(); ++i) {
      double& x = value.data()[i];
      const double saved = x;
      x = saved + eps;
      const double plus = evaluate(objective, params, options);
      x = saved - eps;
      const double minus = evaluate(objective, params, options);
      x = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic.data()[i];
      const double err = relative_error(a, numeric);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.params.push_back(entry);
  }
  return report;
}

}  // namespace cycleground::numcore
