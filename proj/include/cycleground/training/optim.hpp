#pragma once

#include <cstdint>
#include <vector>

#include "cycleground/numcore/parameters.hpp"

namespace cycleground::training {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  numcore::ParameterSet m;
  numcore::ParameterSet v;
  std::int64_t step = 0;

  static AdamState for_params(const numcore::ParameterSet& params);
};

/// One bias-corrected Adam update. `grads` must match `params` name for name.
void adam_step(numcore::ParameterSet& params, const numcore::ParameterSet& grads, AdamState& state,
               double lr, const AdamOptions& options = {});

/// Global L2 norm over every gradient entry.
double global_norm(const numcore::ParameterSet& grads);

/// Rescales all gradients so their global norm is at most max_norm. Returns
/// the norm before clipping.
double clip_global_norm(numcore::ParameterSet& grads, double max_norm);

/// Validation losses seen so far (one per epoch) and the learning rate in
/// force during each of those epochs.
struct PlateauHistory {
  std::vector<double> val_loss;
  std::vector<double> lr;
};

/// Improvement threshold for the plateau rule.
inline constexpr double kPlateauDelta = 1e-4;

/// Returns lr/10 (floored at min_lr) when the last `patience` epochs at the
/// current rate failed to beat the best earlier validation loss by at least
/// 1e-4; otherwise current_lr.
double lr_schedule(const PlateauHistory& history, double current_lr, int patience, double min_lr = 1e-6);

}  // namespace cycleground::training
