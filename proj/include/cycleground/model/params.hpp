#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "cycleground/numcore/parameters.hpp"

namespace cycleground::model {

enum class LocalizerVariant : std::uint8_t {
  Linear,          ///< z_n = (W_l e)^T r_n on the word embedding alone
  Mlp,             ///< one tanh hidden layer before W_l
  UseHiddenState,  ///< scores with the Attention LSTM state instead of the word
};

std::string_view to_string(LocalizerVariant v);
LocalizerVariant localizer_variant_from_string(std::string_view name);

struct ModelDims {
  int vocab = 0;
  int embed = 64;
  int hidden = 64;
  int feature = 16;   ///< raw region feature size d_r
  int classes = 12;   ///< columns of the region-class similarity block
  int location = 16;  ///< location embedding size d_s

  /// Encoded region width d = d_r + C + d_s.
  int encoded() const { return feature + classes + location; }
  void validate() const;

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// The single copy of every learned matrix. Decoding and reconstruction both
/// bind these same entries.
struct ModelParams {
  ModelDims dims;
  LocalizerVariant localizer = LocalizerVariant::Linear;
  numcore::ParameterSet values;
};

namespace names {
inline constexpr std::string_view kWordEmbedding = "W_e";
inline constexpr std::string_view kAttnLstmW = "attn_lstm.W";
inline constexpr std::string_view kAttnLstmB = "attn_lstm.b";
inline constexpr std::string_view kLangLstmW = "lang_lstm.W";
inline constexpr std::string_view kLangLstmB = "lang_lstm.b";
inline constexpr std::string_view kAttnProj = "W_a";
inline constexpr std::string_view kAttnScore = "W_aa";
inline constexpr std::string_view kOutput = "W_o";
inline constexpr std::string_view kOutputBias = "b_o";
inline constexpr std::string_view kLocalizer = "W_l";
inline constexpr std::string_view kLocalizerHidden = "W_l_hidden";
inline constexpr std::string_view kClassifier = "W_c";
inline constexpr std::string_view kLocation = "W_loc";
inline constexpr std::string_view kLocationBias = "b_loc";
}  // namespace names

/// Uniform(-a, a) with a = 1/sqrt(fan_in) for every matrix, zero biases and a
/// forget-gate bias of 1.0 in both LSTMs.
ModelParams init_params(const ModelDims& dims, LocalizerVariant localizer, std::uint64_t seed);

}  // namespace cycleground::model
