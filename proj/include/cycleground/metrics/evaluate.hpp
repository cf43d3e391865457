#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cycleground/metrics/bleu.hpp"
#include "cycleground/metrics/grounding.hpp"
#include "cycleground/model/params.hpp"
#include "cycleground/synthdata/scene.hpp"

namespace cycleground::metrics {

enum class AttentionSource : std::uint8_t { Decoder, Localizer };

struct AttentionAccuracy {
  double decoder = 0.0;
  double localizer = 0.0;
  int annotated = 0;  ///< aligned positions scored
};

/// Teacher-forces every GT caption and, at each aligned position, checks
/// whether the argmax of alpha (decoder) or of beta for the GT word
/// (localizer) has IoU > 0.5 with the aligned GT box.
AttentionAccuracy attention_accuracy(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                                     const model::Vocabulary& vocab);
double attention_accuracy(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                          const model::Vocabulary& vocab, AttentionSource source);

/// A generated caption with the box attended at every token (or none).
struct Prediction {
  int scene_id = 0;
  std::vector<std::string> tokens;  ///< without <bos>/<eos>
  std::vector<std::optional<Box>> attended_boxes;
};

/// Greedy captions for every scene; each token carries the box of its
/// argmax attention weight.
std::vector<Prediction> predict(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                                const model::Vocabulary& vocab, int max_len);

/// GT captions dressed up as predictions, every object token boxed by its
/// alignment. Scoring these gives the upper bound.
std::vector<Prediction> ground_truth_predictions(const std::vector<synthdata::Scene>& scenes,
                                                 const model::Vocabulary& vocab);

GtPool gt_pool(const synthdata::Scene& scene, const model::Vocabulary& vocab);

struct GroundingReport {
  ClassReport per_class;
  PrecRec per_sentence;
  std::optional<AttentionAccuracy> attention;
  BleuScores bleu;
  int sentences = 0;

  nlohmann::json to_json(const model::Vocabulary& vocab) const;
  std::string csv(const model::Vocabulary& vocab) const;
};

/// Scores predictions (ours or an external system's) against the scenes.
/// Unknown tokens are treated as non-object words.
GroundingReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                     const std::vector<synthdata::Scene>& scenes, const model::Vocabulary& vocab);

/// Greedy decoding, grounding scores, BLEU and both attention accuracies.
GroundingReport evaluate(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                         const model::Vocabulary& vocab, int max_len, std::vector<Prediction>* predictions = nullptr);

void save_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path);
std::vector<Prediction> load_predictions(const std::filesystem::path& path);

}  // namespace cycleground::metrics
