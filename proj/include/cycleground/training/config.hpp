#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "cycleground/model/captioner.hpp"
#include "cycleground/model/params.hpp"

namespace cycleground::training {

struct TrainConfig {
  double lambda_decode = 0.5;
  double lambda_reconstruct = 0.5;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 32;
  int max_epochs = 12;
  int pretrain_epochs = 1;  ///< decode-only warmup before the cycle starts
  int plateau_patience = 5;
  double clip_norm = 5.0;
  double min_lr = 1e-6;
  double dropout = 0.0;
  double attention_consistency = 0.0;  ///< weight of the KL(beta || alpha) term
  model::LocalizerVariant localizer = model::LocalizerVariant::Linear;
  model::WordFilter word_filter = model::WordFilter::None;
  int embed = 64;
  int hidden = 64;
  int location = 16;
  int max_caption_len = 16;  ///< greedy decoding limit for validation BLEU
  std::uint64_t seed = 0;

  bool cycle_enabled() const { return lambda_reconstruct != 0.0 || attention_consistency != 0.0; }
  /// Throws ValidationError naming the offending field.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing fields keep their defaults; unknown fields are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace cycleground::training
