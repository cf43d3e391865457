#include "cycleground/training/config.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"

namespace cycleground::training {

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ValidationError(std::string("config field '") + field + "': " + why);
}

bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace

void TrainConfig::validate() const {
  require(finite_nonneg(lambda_decode), "lambda_decode", "must be finite and >= 0");
  require(finite_nonneg(lambda_reconstruct), "lambda_reconstruct", "must be finite and >= 0");
  require(lambda_decode + lambda_reconstruct > 0.0, "lambda_decode", "both loss weights are zero");
  require(std::isfinite(lr) && lr > 0.0, "lr", "must be positive");
  require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1", "must be in [0, 1)");
  require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2", "must be in [0, 1)");
  require(std::isfinite(adam_eps) && adam_eps > 0.0, "adam_eps", "must be positive");
  require(batch_size >= 1, "batch_size", "must be at least 1");
  require(max_epochs >= 1, "max_epochs", "must be at least 1");
  require(pretrain_epochs >= 0, "pretrain_epochs", "must be >= 0");
  require(plateau_patience >= 1, "plateau_patience", "must be at least 1");
  require(std::isfinite(clip_norm) && clip_norm > 0.0, "clip_norm", "must be positive");
  require(std::isfinite(min_lr) && min_lr > 0.0 && min_lr <= lr, "min_lr", "must be in (0, lr]");
  require(dropout >= 0.0 && dropout < 1.0, "dropout", "must be in [0, 1)");
  require(finite_nonneg(attention_consistency), "attention_consistency", "must be finite and >= 0");
  require(embed >= 1, "embed", "must be positive");
  require(hidden >= 1, "hidden", "must be positive");
  require(location >= 1, "location", "must be positive");
  require(max_caption_len >= 1, "max_caption_len", "must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"lambda_decode", c.lambda_decode},
          {"lambda_reconstruct", c.lambda_reconstruct},
          {"lr", c.lr},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"pretrain_epochs", c.pretrain_epochs},
          {"plateau_patience", c.plateau_patience},
          {"clip_norm", c.clip_norm},
          {"min_lr", c.min_lr},
          {"dropout", c.dropout},
          {"attention_consistency", c.attention_consistency},
          {"localizer", model::to_string(c.localizer)},
          {"word_filter", model::to_string(c.word_filter)},
          {"embed", c.embed},
          {"hidden", c.hidden},
          {"location", c.location},
          {"max_caption_len", c.max_caption_len},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  TrainConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("config field '" + key + "': unknown field");
  }
  const auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("config field '") + key + "': " + e.what());
    }
  };
  get("lambda_decode", c.lambda_decode);
  get("lambda_reconstruct", c.lambda_reconstruct);
  get("lr", c.lr);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("batch_size", c.batch_size);
  get("max_epochs", c.max_epochs);
  get("pretrain_epochs", c.pretrain_epochs);
  get("plateau_patience", c.plateau_patience);
  get("clip_norm", c.clip_norm);
  get("min_lr", c.min_lr);
  get("dropout", c.dropout);
  get("attention_consistency", c.attention_consistency);
  std::string localizer(model::to_string(c.localizer));
  std::string filter(model::to_string(c.word_filter));
  get("localizer", localizer);
  get("word_filter", filter);
  try {
    c.localizer = model::localizer_variant_from_string(localizer);
    c.word_filter = model::word_filter_from_string(filter);
  } catch (const UsageError& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  get("embed", c.embed);
  get("hidden", c.hidden);
  get("location", c.location);
  get("max_caption_len", c.max_caption_len);
  get("seed", c.seed);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return train_config_from_json(j);
}

}  // namespace cycleground::training
