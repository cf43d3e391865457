#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cycleground/model/params.hpp"
#include "cycleground/synthdata/scene.hpp"
#include "cycleground/training/config.hpp"
#include "cycleground/training/optim.hpp"

namespace cycleground::training {

struct LogRow {
  int epoch = 0;
  std::string phase;  ///< "warmup" or "joint"
  double lr = 0.0;
  double train_loss = 0.0;
  double train_decode = 0.0;
  double train_reconstruct = 0.0;
  double train_consistency = 0.0;
  double grad_norm = 0.0;  ///< mean pre-clipping norm over the epoch's steps
  double val_loss = 0.0;   ///< teacher-forced decode cross-entropy on the validation split
  double val_bleu1 = 0.0;
  double val_f1_all = 0.0;  ///< per-class macro, greedy captions
  double val_f1_loc = 0.0;
  double val_f1_all_per_sent = 0.0;
  double val_f1_loc_per_sent = 0.0;
  double val_attention_decoder = 0.0;
  double val_attention_localizer = 0.0;
};

struct TrainLog {
  std::vector<LogRow> rows;

  static const std::vector<std::string>& columns();
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Everything needed to continue a run exactly where it stopped.
struct TrainState {
  model::ModelParams params;
  AdamState adam;
  int next_epoch = 0;
  double lr = 0.0;
  model::ModelParams best;
  double best_val = 0.0;
  int best_epoch = -1;
  TrainLog log;
};

struct TrainResult {
  model::ModelParams best;  ///< lowest validation loss
  model::ModelParams last;
  TrainLog log;
  int best_epoch = -1;
  double best_val = 0.0;
};

struct TrainHooks {
  /// Called after every epoch with the state that would resume the run.
  std::function<void(const TrainState&)> on_epoch;
  /// Stop after this many epochs in total (counting resumed ones).
  std::optional<int> stop_after;
};

/// Dataset dims with the config's embedding sizes.
model::ModelDims dims_for(const synthdata::World& world, const TrainConfig& config);

TrainState initial_train_state(const model::ModelDims& dims, const TrainConfig& config);

/// Warmup with the decode loss only for pretrain_epochs, then the full cycle.
/// The returned parameters are the best-validation checkpoint.
TrainResult train(const synthdata::World& world, const synthdata::Dataset& data, const TrainConfig& config,
                  const TrainHooks& hooks = {}, std::optional<TrainState> resume = std::nullopt);

/// Decoder-only loop that never builds localization or reconstruction nodes.
TrainResult train_baseline(const synthdata::World& world, const synthdata::Dataset& data,
                           const TrainConfig& config, const TrainHooks& hooks = {});

void save_train_state(const TrainState& state, const std::filesystem::path& dir);
TrainState load_train_state(const std::filesystem::path& dir);

}  // namespace cycleground::training
