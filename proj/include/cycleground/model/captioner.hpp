#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cycleground/model/params.hpp"
#include "cycleground/model/vocabulary.hpp"
#include "cycleground/numcore/graph.hpp"
#include "cycleground/numcore/rng.hpp"

namespace cycleground::model {

using numcore::Graph;
using numcore::Index;
using numcore::LstmState;
using numcore::Matrix;
using numcore::Var;

/// Graph leaves for every parameter, bound once per graph. Decoding and
/// reconstruction read the same handles, so both stages share storage and
/// gradient slots.
struct BoundParams {
  Var word_embedding;
  numcore::LstmWeights attention_lstm;
  numcore::LstmWeights language_lstm;
  Var attn_proj;
  Var attn_score;
  Var output;
  Var output_bias;
  Var localizer;
  std::optional<Var> localizer_hidden;
  Var classifier;
  Var location;
  Var location_bias;
  LocalizerVariant variant = LocalizerVariant::Linear;
};

BoundParams bind(Graph& graph, const ModelParams& params);

/// Encoded regions for a batch of B examples with N regions each.
struct RegionSet {
  Var features;  ///< [(B*N) x d]; rows b*N .. b*N+N-1 belong to example b
  Var global;    ///< [B x d], mean of each example's encoded regions
  Index batch = 0;
  Index count = 0;
};

/// Throws ValidationError unless every row is x1 < x2, y1 < y2 inside [0, 1].
void validate_boxes(const Matrix& boxes);

/// Concatenates [raw feature ; softmax(raw W_c) ; W_loc box + b_loc] per region
/// and sets v_g to the per-example mean. raw is [(B*N) x d_r], boxes [(B*N) x 4].
RegionSet encode_regions(Graph& graph, const BoundParams& bound, const Matrix& raw,
                         const Matrix& boxes, Index regions_per_example);

struct StepState {
  LstmState attention;
  LstmState language;
};

StepState initial_state(Graph& graph, Index batch, const ModelDims& dims);

/// e = W_e onehot(id), with an optional inverted-dropout mask applied.
Var embed_words(Graph& graph, const BoundParams& bound, std::span<const int> ids,
                const Matrix* dropout_mask = nullptr);

/// h^A_t = LSTM_attn([v_g ; h^L_{t-1} ; e_{t-1}]).
LstmState attention_step(const BoundParams& bound, const StepState& state, Var global,
                         Var prev_embedding);

struct Attended {
  Var weights;  ///< [B x N], rows sum to one
  Var pooled;   ///< [B x d]
  Var scores;   ///< [B x N] pre-softmax
};

/// z_n = W_aa tanh(W_a h^A + r_n), alpha = softmax(z), r_hat = R alpha.
Attended soft_attention(const BoundParams& bound, Var h_attention, const RegionSet& regions);

struct LanguageOut {
  LstmState state;
  Var logits;  ///< [B x V]
};

/// h^L = LSTM_lang([r_hat ; h^A]), logits = W_o h^L + b_o.
LanguageOut language_step(const BoundParams& bound, const LstmState& language_prev,
                          Var pooled, Var h_attention);

/// beta = softmax((W_l e)^T r_n) for the given words, which enter as plain ids
/// (graph leaves): nothing upstream of the word choice receives gradient.
/// The use_hA variant scores with `h_attention` instead of the word.
Attended localize(Graph& graph, const BoundParams& bound, std::span<const int> words,
                  const RegionSet& regions, std::optional<Var> h_attention = std::nullopt);

/// Teacher-forced batch. Steps are time-major: inputs[t][b] is the token fed at
/// step t (BOS first), targets[t][b] the token to predict.
struct Batch {
  Index size = 0;
  Index regions = 0;
  Matrix features;  ///< [(B*N) x d_r]
  Matrix boxes;     ///< [(B*N) x 4]
  std::vector<std::vector<int>> inputs;
  std::vector<std::vector<int>> targets;
  std::vector<std::vector<bool>> groundable;  ///< target word is groundable
  std::vector<int> lengths;                   ///< unpadded target length per example

  Index steps() const { return static_cast<Index>(targets.size()); }
  bool active(Index t, Index b) const { return targets[static_cast<std::size_t>(t)][static_cast<std::size_t>(b)] != 0; }
};

enum class WordFilter : std::uint8_t { None, ZeroLoss, ZeroRepresentation };

std::string_view to_string(WordFilter f);
WordFilter word_filter_from_string(std::string_view name);

struct CycleOptions {
  bool run_cycle = true;  ///< localize + reconstruct; off for the baseline
  WordFilter filter = WordFilter::None;
  double dropout = 0.0;
  std::optional<numcore::Rng> dropout_rng;
  bool record_traces = false;
  /// Replaces the localizer's word inputs (indexed [t][b]); graph tests use it
  /// to show the words carry no gradient.
  const std::vector<std::vector<int>>* localizer_words = nullptr;
};

struct StepTrace {
  int t = 0;
  std::vector<double> alpha;
  std::vector<double> beta;
  int word_pred = 0;
  int attended_region = 0;
  int localized_region = -1;
  std::vector<double> logits_decode;
  std::vector<double> logits_reconstruct;
};

struct CycleOutput {
  /// traces[b] holds one StepTrace per target position of example b.
  std::vector<std::vector<StepTrace>> traces;
  Var loss_decode;
  Var loss_reconstruct;
  std::vector<Var> alphas;  ///< per step, [B x N]
  std::vector<Var> alpha_scores;  ///< pre-softmax decoder attention per step
  std::vector<Var> betas;   ///< per step, empty when the cycle is skipped
  std::vector<Var> decode_logits;
  std::vector<Var> reconstruct_logits;
  std::vector<std::vector<int>> decoded_words;  ///< argmax y^d, [t][b]
};

/// Builds the full cycle in `graph`: teacher-forced decoding, localization of
/// the argmax decoded words, and reconstruction from fresh LSTM states whose
/// Language LSTM reads the localized regions. Losses are cross-entropies
/// normalized per example by its unmasked token count, then averaged over the
/// batch.
CycleOutput cyclical_forward(Graph& graph, const BoundParams& bound, const ModelDims& dims,
                             const Batch& batch, CycleOptions options);

/// Per-example output of greedy decoding.
struct Generation {
  std::vector<int> words;  ///< emitted ids, EOS excluded
  std::vector<StepTrace> traces;
};

/// Greedy argmax decoding from BOS until EOS or max_len for each example.
std::vector<Generation> generate(const ModelParams& params, const Matrix& raw,
                                 const Matrix& boxes, Index regions_per_example, int max_len);

int argmax(std::span<const double> values);

}  // namespace cycleground::model
