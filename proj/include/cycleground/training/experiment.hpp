#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cycleground/metrics/evaluate.hpp"
#include "cycleground/training/trainer.hpp"

namespace cycleground::training {

/// Headline numbers of one trained model on one split.
struct RunSummary {
  double f1_all = 0.0;  ///< macro over classes
  double f1_loc = 0.0;
  double f1_all_per_sent = 0.0;
  double f1_loc_per_sent = 0.0;
  double attention_decoder = 0.0;
  double attention_localizer = 0.0;
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  int best_epoch = -1;

  static const std::vector<std::string>& fields();
  std::vector<double> values() const;
};

RunSummary summarize(const metrics::GroundingReport& report, int best_epoch);

struct ExperimentResult {
  TrainResult train;
  metrics::GroundingReport report;
  RunSummary summary;
};

/// Trains on data.train/val and evaluates the best checkpoint on data.test.
/// `baseline` selects the decoder-only loop.
ExperimentResult run_experiment(const synthdata::World& world, const synthdata::Dataset& data,
                                const TrainConfig& config, bool baseline = false);

/// One row of an ablation grid: overrides applied on top of a base config.
struct GridCell {
  nlohmann::json overrides;
  std::string label;
  TrainConfig config;  ///< base + overrides, seed not yet set
};

struct Grid {
  std::vector<int> seeds;
  std::vector<GridCell> cells;
};

/// {"seeds": [...], "base": {config fields}, "cells": [{config fields}, ...]}.
/// Cells are sorted by (lambda_decode, lambda_reconstruct, label).
Grid grid_from_json(const nlohmann::json& j);
Grid load_grid(const std::filesystem::path& path);

double median(std::vector<double> values);

}  // namespace cycleground::training
