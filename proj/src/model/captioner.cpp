#include "cycleground/model/captioner.hpp"

#include <algorithm>
#include <string>

#include "cycleground/errors.hpp"

namespace cycleground::model {

using numcore::Stage;

int argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax of an empty range");
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::string_view to_string(WordFilter f) {
  switch (f) {
    case WordFilter::None: return "none";
    case WordFilter::ZeroLoss: return "zero_loss";
    case WordFilter::ZeroRepresentation: return "zero_representation";
  }
  return "none";
}

WordFilter word_filter_from_string(std::string_view name) {
  if (name == "none") return WordFilter::None;
  if (name == "zero_loss") return WordFilter::ZeroLoss;
  if (name == "zero_representation") return WordFilter::ZeroRepresentation;
  throw UsageError("unknown word filter '" + std::string(name) +
                   "' (expected none, zero_loss or zero_representation)");
}

BoundParams bind(Graph& graph, const ModelParams& params) {
  const auto& v = params.values;
  auto p = [&](std::string_view name) { return graph.param(name, v.at(name)); };
  BoundParams b;
  b.word_embedding = p(names::kWordEmbedding);
  b.attention_lstm = {p(names::kAttnLstmW), p(names::kAttnLstmB)};
  b.language_lstm = {p(names::kLangLstmW), p(names::kLangLstmB)};
  b.attn_proj = p(names::kAttnProj);
  b.attn_score = p(names::kAttnScore);
  b.output = p(names::kOutput);
  b.output_bias = p(names::kOutputBias);
  b.localizer = p(names::kLocalizer);
  if (params.localizer == LocalizerVariant::Mlp) b.localizer_hidden = p(names::kLocalizerHidden);
  b.classifier = p(names::kClassifier);
  b.location = p(names::kLocation);
  b.location_bias = p(names::kLocationBias);
  b.variant = params.localizer;
  return b;
}

void validate_boxes(const Matrix& boxes) {
  if (boxes.cols() != 4) {
    throw ValidationError("boxes must have 4 columns, got " + std::to_string(boxes.cols()));
  }
  for (Index i = 0; i < boxes.rows(); ++i) {
    const double x1 = boxes(i, 0), y1 = boxes(i, 1), x2 = boxes(i, 2), y2 = boxes(i, 3);
    if (!(x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0)) {
      throw ValidationError("degenerate box at row " + std::to_string(i) + ": (" +
                            std::to_string(x1) + ", " + std::to_string(y1) + ", " +
                            std::to_string(x2) + ", " + std::to_string(y2) + ")");
    }
  }
}

RegionSet encode_regions(Graph& graph, const BoundParams& bound, const Matrix& raw,
                         const Matrix& boxes, Index regions_per_example) {
  if (regions_per_example < 1 || raw.rows() == 0 || raw.rows() % regions_per_example != 0) {
    throw ValidationError("encode_regions: " + std::to_string(raw.rows()) +
                          " feature rows do not split into groups of " +
                          std::to_string(regions_per_example));
  }
  if (boxes.rows() != raw.rows()) {
    throw DimensionError("encode_regions: " + std::to_string(boxes.rows()) + " boxes for " +
                         std::to_string(raw.rows()) + " regions");
  }
  validate_boxes(boxes);
  const Stage saved = graph.stage();
  graph.set_stage(Stage::Encode);
  Var features = graph.constant(raw);
  Var similarity = numcore::softmax(numcore::matmul(features, bound.classifier));
  Var location = numcore::add_row(numcore::matmul(graph.constant(boxes), bound.location),
                                  bound.location_bias);
  RegionSet set;
  set.features = numcore::concat({features, similarity, location});
  set.batch = raw.rows() / regions_per_example;
  set.count = regions_per_example;
  Var uniform = graph.constant(
      Matrix::Constant(set.batch, set.count, 1.0 / static_cast<double>(set.count)));
  set.global = numcore::region_pool(uniform, set.features);
  graph.set_stage(saved);
  return set;
}

StepState initial_state(Graph& graph, Index batch, const ModelDims& dims) {
  auto zeros = [&] { return graph.constant(Matrix::Zero(batch, dims.hidden)); };
  return {{zeros(), zeros()}, {zeros(), zeros()}};
}

Var embed_words(Graph& graph, const BoundParams& bound, std::span<const int> ids,
                const Matrix* dropout_mask) {
  Var e = numcore::gather_rows(bound.word_embedding, ids);
  if (dropout_mask != nullptr) {
    e = numcore::mul(e, graph.constant(*dropout_mask));
  }
  return e;
}

LstmState attention_step(const BoundParams& bound, const StepState& state, Var global,
                         Var prev_embedding) {
  Var input = numcore::concat({global, state.language.h, prev_embedding});
  return numcore::lstm_cell(input, state.attention.h, state.attention.c, bound.attention_lstm);
}

Attended soft_attention(const BoundParams& bound, Var h_attention, const RegionSet& regions) {
  Var query = numcore::matmul(h_attention, bound.attn_proj);
  Var hidden = numcore::tanh(
      numcore::add(numcore::repeat_rows(query, regions.count), regions.features));
  Var scores = numcore::reshape(numcore::matmul(hidden, bound.attn_score), regions.batch,
                                regions.count);
  Var alpha = numcore::softmax(scores);
  return {alpha, numcore::region_pool(alpha, regions.features), scores};
}

LanguageOut language_step(const BoundParams& bound, const LstmState& language_prev, Var pooled,
                          Var h_attention) {
  Var input = numcore::concat({pooled, h_attention});
  LstmState next = numcore::lstm_cell(input, language_prev.h, language_prev.c, bound.language_lstm);
  Var logits = numcore::add_row(numcore::matmul(next.h, bound.output), bound.output_bias);
  return {next, logits};
}

Attended localize(Graph& graph, const BoundParams& bound, std::span<const int> words,
                  const RegionSet& regions, std::optional<Var> h_attention) {
  Var query;
  switch (bound.variant) {
    case LocalizerVariant::Linear:
      query = numcore::matmul(embed_words(graph, bound, words), bound.localizer);
      break;
    case LocalizerVariant::Mlp: {
      Var hidden = numcore::tanh(
          numcore::matmul(embed_words(graph, bound, words), *bound.localizer_hidden));
      query = numcore::matmul(hidden, bound.localizer);
      break;
    }
    case LocalizerVariant::UseHiddenState:
      if (!h_attention) throw UsageError("localize: use_hA variant needs the Attention LSTM state");
      query = numcore::matmul(*h_attention, bound.localizer);
      break;
  }
  Var scores = numcore::region_dot(query, regions.features);
  Var beta = numcore::softmax(scores);
  return {beta, numcore::region_pool(beta, regions.features), scores};
}

namespace {

Matrix dropout_mask(numcore::Rng& rng, Index rows, Index cols, double rate) {
  Matrix m(rows, cols);
  const double keep = 1.0 / (1.0 - rate);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform() < rate ? 0.0 : keep;
  return m;
}

std::vector<double> row_of(const Matrix& m, Index r) {
  return std::vector<double>(m.row(r).data(), m.row(r).data() + m.cols());
}

void check_batch(const Batch& batch) {
  if (batch.size < 1 || batch.steps() < 1) {
    throw UsageError("cyclical_forward: target length must be >= 1");
  }
  const auto b = static_cast<std::size_t>(batch.size);
  if (batch.inputs.size() != batch.targets.size() || batch.groundable.size() != batch.targets.size() ||
      batch.lengths.size() != b) {
    throw DimensionError("cyclical_forward: inconsistent batch layout");
  }
  for (std::size_t t = 0; t < batch.targets.size(); ++t) {
    if (batch.inputs[t].size() != b || batch.targets[t].size() != b || batch.groundable[t].size() != b) {
      throw DimensionError("cyclical_forward: step " + std::to_string(t) + " has wrong width");
    }
  }
  for (int len : batch.lengths) {
    if (len < 1) throw UsageError("cyclical_forward: target length must be >= 1");
  }
}

}  // namespace

CycleOutput cyclical_forward(Graph& graph, const BoundParams& bound, const ModelDims& dims,
                             const Batch& batch, CycleOptions options) {
  check_batch(batch);
  if (options.dropout < 0.0 || options.dropout >= 1.0) {
    throw UsageError("dropout rate must be in [0, 1)");
  }
  const bool use_dropout = options.dropout > 0.0;
  if (use_dropout && !options.dropout_rng) {
    throw UsageError("dropout enabled without a random stream");
  }
  const Index B = batch.size;
  const Index T = batch.steps();
  const auto Bs = static_cast<std::size_t>(B);
  const double inv_batch = 1.0 / static_cast<double>(B);

  RegionSet regions = encode_regions(graph, bound, batch.features, batch.boxes, batch.regions);

  CycleOutput out;
  std::vector<double> weights(Bs);
  auto next_mask = [&](Index rows) -> std::optional<Matrix> {
    if (!use_dropout) return std::nullopt;
    return dropout_mask(*options.dropout_rng, rows, dims.embed, options.dropout);
  };

  // Stage 1: teacher-forced decoding.
  graph.set_stage(Stage::Decode);
  StepState state = initial_state(graph, B, dims);
  std::vector<Var> decode_losses;
  for (Index t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    const auto mask = next_mask(B);
    Var e = embed_words(graph, bound, batch.inputs[ts], mask ? &*mask : nullptr);
    state.attention = attention_step(bound, state, regions.global, e);
    Attended att = soft_attention(bound, state.attention.h, regions);
    LanguageOut lang = language_step(bound, state.language, att.pooled, state.attention.h);
    state.language = lang.state;

    for (std::size_t b = 0; b < Bs; ++b) {
      weights[b] = batch.active(t, static_cast<Index>(b))
                       ? inv_batch / static_cast<double>(batch.lengths[b])
                       : 0.0;
    }
    decode_losses.push_back(numcore::cross_entropy(lang.logits, batch.targets[ts], weights));
    out.alphas.push_back(att.weights);
    out.alpha_scores.push_back(att.scores);
    out.decode_logits.push_back(lang.logits);

    std::vector<int> words(Bs);
    const Matrix& logits = lang.logits.value();
    for (std::size_t b = 0; b < Bs; ++b) {
      Eigen::Index best = 0;
      logits.row(static_cast<Index>(b)).maxCoeff(&best);
      words[b] = static_cast<int>(best);
    }
    out.decoded_words.push_back(std::move(words));
  }
  graph.set_stage(Stage::Loss);
  out.loss_decode = decode_losses.front();
  for (std::size_t i = 1; i < decode_losses.size(); ++i) {
    out.loss_decode = numcore::add(out.loss_decode, decode_losses[i]);
  }

  if (options.run_cycle) {
    // Per-example normalizer for the reconstruction term.
    std::vector<double> counts(Bs, 0.0);
    for (Index t = 0; t < T; ++t) {
      for (std::size_t b = 0; b < Bs; ++b) {
        const bool counted = batch.active(t, static_cast<Index>(b)) &&
                             (options.filter != WordFilter::ZeroLoss ||
                              batch.groundable[static_cast<std::size_t>(t)][b]);
        if (counted) counts[b] += 1.0;
      }
    }

    // Stages 2 and 3: localize decoded words, reconstruct from fresh states.
    StepState rstate = initial_state(graph, B, dims);
    std::vector<Var> rec_losses;
    for (Index t = 0; t < T; ++t) {
      const auto ts = static_cast<std::size_t>(t);
      graph.set_stage(Stage::Reconstruct);
      const auto mask = next_mask(B);
      Var e = embed_words(graph, bound, batch.inputs[ts], mask ? &*mask : nullptr);
      rstate.attention = attention_step(bound, rstate, regions.global, e);

      graph.set_stage(Stage::Localize);
      const std::vector<int>& words =
          options.localizer_words ? (*options.localizer_words)[ts] : out.decoded_words[ts];
      Attended loc = localize(graph, bound, words, regions, rstate.attention.h);
      Var pooled = loc.pooled;
      if (options.filter == WordFilter::ZeroRepresentation) {
        Matrix keep = Matrix::Ones(B, pooled.value().cols());
        for (std::size_t b = 0; b < Bs; ++b) {
          if (!batch.groundable[ts][b]) keep.row(static_cast<Index>(b)).setZero();
        }
        pooled = numcore::mul(pooled, graph.constant(std::move(keep)));
      }

      graph.set_stage(Stage::Reconstruct);
      LanguageOut lang = language_step(bound, rstate.language, pooled, rstate.attention.h);
      rstate.language = lang.state;
      for (std::size_t b = 0; b < Bs; ++b) {
        const bool counted = batch.active(t, static_cast<Index>(b)) &&
                             (options.filter != WordFilter::ZeroLoss || batch.groundable[ts][b]);
        weights[b] = counted ? inv_batch / counts[b] : 0.0;
      }
      rec_losses.push_back(numcore::cross_entropy(lang.logits, batch.targets[ts], weights));
      out.betas.push_back(loc.weights);
      out.reconstruct_logits.push_back(lang.logits);
    }
    graph.set_stage(Stage::Loss);
    out.loss_reconstruct = rec_losses.front();
    for (std::size_t i = 1; i < rec_losses.size(); ++i) {
      out.loss_reconstruct = numcore::add(out.loss_reconstruct, rec_losses[i]);
    }
  } else {
    graph.set_stage(Stage::Loss);
    out.loss_reconstruct = graph.constant(Matrix::Zero(1, 1));
  }
  graph.set_stage(Stage::None);

  if (options.record_traces) {
    out.traces.resize(Bs);
    for (std::size_t b = 0; b < Bs; ++b) {
      const auto bi = static_cast<Index>(b);
      for (Index t = 0; t < batch.lengths[b]; ++t) {
        const auto ts = static_cast<std::size_t>(t);
        StepTrace tr;
        tr.t = static_cast<int>(t);
        tr.alpha = row_of(out.alphas[ts].value(), bi);
        tr.attended_region = argmax(tr.alpha);
        tr.word_pred = out.decoded_words[ts][b];
        tr.logits_decode = row_of(out.decode_logits[ts].value(), bi);
        if (!out.betas.empty()) {
          tr.beta = row_of(out.betas[ts].value(), bi);
          tr.localized_region = argmax(tr.beta);
          tr.logits_reconstruct = row_of(out.reconstruct_logits[ts].value(), bi);
        }
        out.traces[b].push_back(std::move(tr));
      }
    }
  }
  return out;
}

std::vector<Generation> generate(const ModelParams& params, const Matrix& raw,
                                 const Matrix& boxes, Index regions_per_example, int max_len) {
  if (max_len < 1) throw UsageError("generate: max_len must be >= 1");
  Graph graph;
  BoundParams bound = bind(graph, params);
  RegionSet regions = encode_regions(graph, bound, raw, boxes, regions_per_example);
  const Index B = regions.batch;
  const auto Bs = static_cast<std::size_t>(B);
  StepState state = initial_state(graph, B, params.dims);
  std::vector<int> prev(Bs, Vocabulary::kBos);
  std::vector<bool> done(Bs, false);
  std::vector<Generation> out(Bs);
  for (int t = 0; t < max_len; ++t) {
    Var e = embed_words(graph, bound, prev);
    state.attention = attention_step(bound, state, regions.global, e);
    Attended att = soft_attention(bound, state.attention.h, regions);
    LanguageOut lang = language_step(bound, state.language, att.pooled, state.attention.h);
    state.language = lang.state;
    const Matrix& logits = lang.logits.value();
    const Matrix& alpha = att.weights.value();
    bool all_done = true;
    for (std::size_t b = 0; b < Bs; ++b) {
      const auto bi = static_cast<Index>(b);
      Eigen::Index best = 0;
      logits.row(bi).maxCoeff(&best);
      const int word = static_cast<int>(best);
      prev[b] = word;
      if (done[b]) continue;
      if (word == Vocabulary::kEos) {
        done[b] = true;
        continue;
      }
      StepTrace tr;
      tr.t = t;
      tr.alpha = row_of(alpha, bi);
      tr.attended_region = argmax(tr.alpha);
      tr.word_pred = word;
      tr.logits_decode = row_of(logits, bi);
      out[b].words.push_back(word);
      out[b].traces.push_back(std::move(tr));
      all_done = false;
    }
    if (all_done) break;
  }
  return out;
}

}  // namespace cycleground::model
