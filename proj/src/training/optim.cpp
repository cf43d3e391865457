#include "cycleground/training/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cycleground/errors.hpp"

namespace cycleground::training {

AdamState AdamState::for_params(const numcore::ParameterSet& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

void adam_step(numcore::ParameterSet& params, const numcore::ParameterSet& grads, AdamState& state,
               double lr, const AdamOptions& options) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment sets differ in size");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(options.beta1, t);
  const double c2 = 1.0 - std::pow(options.beta2, t);
  auto g_it = grads.begin();
  auto m_it = state.m.begin();
  auto v_it = state.v.begin();
  for (auto& [name, w] : params) {
    const auto& [g_name, g] = *g_it++;
    auto& m = (m_it++)->second;
    auto& v = (v_it++)->second;
    if (g_name != name || g.rows() != w.rows() || g.cols() != w.cols()) {
      throw DimensionError("adam_step: gradient '" + g_name + "' does not match parameter '" + name + "'");
    }
    m = options.beta1 * m + (1.0 - options.beta1) * g;
    v = options.beta2 * v + (1.0 - options.beta2) * g.cwiseProduct(g);
    w.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + options.eps);
  }
}

double global_norm(const numcore::ParameterSet& grads) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  return std::sqrt(sq);
}

double clip_global_norm(numcore::ParameterSet& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("gradient norm is not finite");
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads) g *= factor;
  }
  return norm;
}

double lr_schedule(const PlateauHistory& history, double current_lr, int patience, double min_lr) {
  if (patience < 1) throw UsageError("lr_schedule: patience must be at least 1");
  if (history.val_loss.size() != history.lr.size()) {
    throw DimensionError("lr_schedule: history columns differ in length");
  }
  const std::size_t n = history.val_loss.size();
  std::size_t at_current = 0;
  while (at_current < n && history.lr[n - 1 - at_current] == current_lr) ++at_current;
  const auto p = static_cast<std::size_t>(patience);
  if (at_current < p) return current_lr;

  double best_before = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + p < n; ++i) best_before = std::min(best_before, history.val_loss[i]);
  double recent = std::numeric_limits<double>::infinity();
  for (std::size_t i = n - p; i < n; ++i) recent = std::min(recent, history.val_loss[i]);
  if (recent <= best_before - kPlateauDelta) return current_lr;
  return std::max(min_lr, current_lr / 10.0);
}

}  // namespace cycleground::training
