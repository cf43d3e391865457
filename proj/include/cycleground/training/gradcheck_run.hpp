#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json_fwd.hpp>

#include "cycleground/model/captioner.hpp"
#include "cycleground/numcore/gradcheck.hpp"

namespace cycleground::training {

/// Tiny random problem for checking every parameter gradient of the full
/// cyclical loss. Dropout is never applied here.
struct GradcheckConfig {
  int vocab = 10;
  int embed = 8;
  int hidden = 8;
  int feature = 6;
  int classes = 3;
  int location = 4;
  int regions = 4;
  int steps = 4;
  int batch = 2;
  double eps = 1e-4;
  double tolerance = 1e-3;
  double lambda_decode = 0.5;
  double lambda_reconstruct = 0.5;
  double attention_consistency = 0.1;
  model::LocalizerVariant localizer = model::LocalizerVariant::Linear;
  model::WordFilter word_filter = model::WordFilter::None;
  std::uint64_t seed = 0;
  /// Registers a wrong tanh derivative; the check must then fail.
  bool inject_tanh_bug = false;

  void validate() const;
};

nlohmann::json to_json(const GradcheckConfig& c);
GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j);
GradcheckConfig load_gradcheck_config(const std::filesystem::path& path);

/// Random batch with `steps` targets per example; the last one is EOS.
model::Batch random_batch(const GradcheckConfig& config, numcore::Rng& rng);

numcore::GradCheckReport run_gradcheck(const GradcheckConfig& config);

}  // namespace cycleground::training
