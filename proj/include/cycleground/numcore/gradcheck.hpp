#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cycleground/numcore/graph.hpp"
#include "cycleground/numcore/parameters.hpp"

namespace cycleground::numcore {

/// Builds a scalar objective over `params` inside `graph`. Parameters must be
/// bound through Graph::param under their ParameterSet names.
using Objective = std::function<Var(Graph& graph, const ParameterSet& params)>;

struct ParamGradCheck {
  std::string name;
  Shape shape;
  double max_rel_error = 0.0;
  Index worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<ParamGradCheck> params;
  double max_rel_error = 0.0;

  bool passed(double tolerance) const { return max_rel_error <= tolerance; }
  /// Entries sorted by decreasing error, at most `count` of them.
  std::vector<ParamGradCheck> worst(std::size_t count) const;
};

/// |a - n| / max(1e-8, |a| + |n|).
double relative_error(double analytic, double numeric);

/// Compares reverse-mode gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps) for every element of every parameter.
/// `params` is perturbed in place and restored. A non-finite objective value
/// raises NumericError.
GradCheckReport grad_check(const Objective& objective, ParameterSet& params, double eps,
                           GraphOptions options = {});

}  // namespace cycleground::numcore
