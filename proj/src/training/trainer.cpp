#include "cycleground/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"
#include "cycleground/metrics/evaluate.hpp"
#include "cycleground/model/captioner.hpp"
#include "cycleground/model/checkpoint.hpp"
#include "cycleground/synthdata/batching.hpp"
#include "cycleground/training/losses.hpp"

namespace cycleground::training {

using synthdata::Example;
using synthdata::examples_of;
using synthdata::make_batch;

namespace {

constexpr std::uint64_t kShuffleKey = 0x73687566;  // "shuf"
constexpr std::uint64_t kDropoutKey = 0x64726f70;  // "drop"
constexpr int kStateVersion = 1;

struct StepStats {
  double loss = 0.0;
  double decode = 0.0;
  double reconstruct = 0.0;
  double consistency = 0.0;
  double grad_norm = 0.0;
};

using StepFn = std::function<StepStats(TrainState&, const model::Batch&, std::optional<numcore::Rng>, bool)>;

numcore::ParameterSet gradients_of(const numcore::Graph& graph, const model::ModelParams& params) {
  numcore::ParameterSet grads;
  for (const auto& [name, value] : params.values) {
    const auto leaf = graph.find_param(name);
    if (!leaf) throw UsageError("parameter '" + name + "' was never bound");
    grads.add(name, leaf->grad());
  }
  return grads;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + " is not finite");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double validation_loss(const model::ModelParams& params, const model::Batch& batch) {
  numcore::Graph graph;
  const model::BoundParams bound = model::bind(graph, params);
  model::CycleOptions options;
  options.run_cycle = false;
  const auto out = model::cyclical_forward(graph, bound, params.dims, batch, options);
  return out.loss_decode.scalar();
}

const std::vector<std::pair<const char*, double LogRow::*>>& numeric_fields() {
  static const std::vector<std::pair<const char*, double LogRow::*>> fields = {
      {"lr", &LogRow::lr},
      {"train_loss", &LogRow::train_loss},
      {"train_decode", &LogRow::train_decode},
      {"train_reconstruct", &LogRow::train_reconstruct},
      {"train_consistency", &LogRow::train_consistency},
      {"grad_norm", &LogRow::grad_norm},
      {"val_loss", &LogRow::val_loss},
      {"val_bleu1", &LogRow::val_bleu1},
      {"val_f1_all", &LogRow::val_f1_all},
      {"val_f1_loc", &LogRow::val_f1_loc},
      {"val_f1_all_per_sent", &LogRow::val_f1_all_per_sent},
      {"val_f1_loc_per_sent", &LogRow::val_f1_loc_per_sent},
      {"val_attention_decoder", &LogRow::val_attention_decoder},
      {"val_attention_localizer", &LogRow::val_attention_localizer},
  };
  return fields;
}

void record_validation(LogRow& row, const model::ModelParams& params, const synthdata::World& world,
                       const std::vector<synthdata::Scene>& scenes, int max_len) {
  const metrics::GroundingReport report = metrics::evaluate(params, scenes, world.vocab, max_len);
  row.val_bleu1 = report.bleu.scores.at(0);
  row.val_f1_all = report.per_class.macro.f1_all;
  row.val_f1_loc = report.per_class.macro.f1_loc;
  row.val_f1_all_per_sent = report.per_sentence.f1_all;
  row.val_f1_loc_per_sent = report.per_sentence.f1_loc;
  row.val_attention_decoder = report.attention->decoder;
  row.val_attention_localizer = report.attention->localizer;
}

TrainResult drive(const synthdata::World& world, const synthdata::Dataset& data, const TrainConfig& config,
                  const TrainHooks& hooks, std::optional<TrainState> resume, const StepFn& step) {
  config.validate();
  if (data.train.empty() || data.val.empty()) throw UsageError("train: dataset needs non-empty train and val splits");
  const model::ModelDims dims = dims_for(world, config);
  TrainState state = resume ? std::move(*resume) : initial_train_state(dims, config);
  if (!(state.params.dims == dims) || state.params.localizer != config.localizer) {
    throw UsageError("train: resume state does not match the dataset and config");
  }

  const std::vector<Example> canonical = examples_of(data.train);
  const model::Batch val_batch = make_batch(data.val, examples_of(data.val), world.vocab);
  const numcore::Rng root(config.seed);
  const numcore::Rng shuffle_root = root.split(kShuffleKey);
  const numcore::Rng dropout_root = root.split(kDropoutKey);
  const auto B = static_cast<std::size_t>(config.batch_size);

  for (int epoch = state.next_epoch; epoch < config.max_epochs; ++epoch) {
    if (hooks.stop_after && epoch >= *hooks.stop_after) break;
    const bool joint = epoch >= config.pretrain_epochs;

    std::vector<Example> order = canonical;
    numcore::Rng shuffler = shuffle_root.split(static_cast<std::uint64_t>(epoch));
    shuffler.shuffle(std::span<Example>(order));
    const numcore::Rng epoch_dropout = dropout_root.split(static_cast<std::uint64_t>(epoch));

    StepStats sum;
    int steps = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t count = std::min(B, order.size() - start);
      const model::Batch batch = make_batch(data.train, std::span(order).subspan(start, count), world.vocab);
      std::optional<numcore::Rng> drop;
      if (config.dropout > 0.0) drop = epoch_dropout.split(static_cast<std::uint64_t>(steps));
      const StepStats s = step(state, batch, drop, joint);
      sum.loss += s.loss;
      sum.decode += s.decode;
      sum.reconstruct += s.reconstruct;
      sum.consistency += s.consistency;
      sum.grad_norm += s.grad_norm;
      ++steps;
    }

    LogRow row;
    row.epoch = epoch;
    row.phase = joint ? "joint" : "warmup";
    row.lr = state.lr;
    row.train_loss = sum.loss / steps;
    row.train_decode = sum.decode / steps;
    row.train_reconstruct = sum.reconstruct / steps;
    row.train_consistency = sum.consistency / steps;
    row.grad_norm = sum.grad_norm / steps;
    row.val_loss = validation_loss(state.params, val_batch);
    check_finite(row.val_loss, "validation loss");
    record_validation(row, state.params, world, data.val, config.max_caption_len);
    state.log.rows.push_back(row);

    if (state.best_epoch < 0 || row.val_loss < state.best_val) {
      state.best = state.params;
      state.best_val = row.val_loss;
      state.best_epoch = epoch;
    }
    PlateauHistory history;
    for (const auto& r : state.log.rows) {
      history.val_loss.push_back(r.val_loss);
      history.lr.push_back(r.lr);
    }
    state.lr = lr_schedule(history, state.lr, config.plateau_patience, config.min_lr);
    state.next_epoch = epoch + 1;
    if (hooks.on_epoch) hooks.on_epoch(state);
  }

  TrainResult result;
  result.best = state.best_epoch >= 0 ? state.best : state.params;
  result.last = state.params;
  result.log = state.log;
  result.best_epoch = state.best_epoch;
  result.best_val = state.best_val;
  return result;
}

StepStats update(TrainState& state, numcore::Graph& graph, numcore::Var loss, const TrainConfig& config,
                 StepStats stats) {
  stats.loss = loss.scalar();
  check_finite(stats.loss, "training loss");
  graph.backward(loss);
  numcore::ParameterSet grads = gradients_of(graph, state.params);
  stats.grad_norm = clip_global_norm(grads, config.clip_norm);
  adam_step(state.params.values, grads, state.adam, state.lr,
            {config.adam_beta1, config.adam_beta2, config.adam_eps});
  return stats;
}

}  // namespace

model::ModelDims dims_for(const synthdata::World& world, const TrainConfig& config) {
  model::ModelDims d;
  d.vocab = world.vocab.size();
  d.embed = config.embed;
  d.hidden = config.hidden;
  d.feature = world.spec.class_embed_dim;
  d.classes = world.spec.num_classes;
  d.location = config.location;
  d.validate();
  return d;
}

TrainState initial_train_state(const model::ModelDims& dims, const TrainConfig& config) {
  TrainState s;
  s.params = model::init_params(dims, config.localizer, config.seed);
  s.adam = AdamState::for_params(s.params.values);
  s.lr = config.lr;
  s.best_val = std::numeric_limits<double>::infinity();
  return s;
}

TrainResult train(const synthdata::World& world, const synthdata::Dataset& data, const TrainConfig& config,
                  const TrainHooks& hooks, std::optional<TrainState> resume) {
  const StepFn step = [&config](TrainState& state, const model::Batch& batch, std::optional<numcore::Rng> drop,
                                bool joint) {
    const bool cycle = joint && config.cycle_enabled();
    numcore::Graph graph;
    const model::BoundParams bound = model::bind(graph, state.params);
    model::CycleOptions options;
    options.run_cycle = cycle;
    options.filter = config.word_filter;
    options.dropout = config.dropout;
    options.dropout_rng = std::move(drop);
    const auto out = model::cyclical_forward(graph, bound, state.params.dims, batch, options);
    StepStats stats;
    stats.decode = out.loss_decode.scalar();
    stats.reconstruct = out.loss_reconstruct.scalar();
    const double lambda_rec = cycle ? config.lambda_reconstruct : 0.0;
    numcore::Var loss = total_loss(out.loss_decode, out.loss_reconstruct, config.lambda_decode, lambda_rec);
    if (cycle && config.attention_consistency != 0.0) {
      const numcore::Var kl = attention_consistency_loss(out.alpha_scores, out.betas, batch);
      stats.consistency = kl.scalar();
      loss = numcore::add(loss, numcore::scale(kl, config.attention_consistency));
    }
    return update(state, graph, loss, config, stats);
  };
  return drive(world, data, config, hooks, std::move(resume), step);
}

TrainResult train_baseline(const synthdata::World& world, const synthdata::Dataset& data,
                           const TrainConfig& config, const TrainHooks& hooks) {
  const StepFn step = [&config](TrainState& state, const model::Batch& batch, std::optional<numcore::Rng> drop,
                                bool) {
    numcore::Graph graph;
    const model::BoundParams bound = model::bind(graph, state.params);
    model::CycleOptions options;
    options.run_cycle = false;
    options.dropout = config.dropout;
    options.dropout_rng = std::move(drop);
    const auto out = model::cyclical_forward(graph, bound, state.params.dims, batch, options);
    StepStats stats;
    stats.decode = out.loss_decode.scalar();
    return update(state, graph, numcore::scale(out.loss_decode, config.lambda_decode), config, stats);
  };
  return drive(world, data, config, hooks, std::nullopt, step);
}

const std::vector<std::string>& TrainLog::columns() {
  static const std::vector<std::string> cols = [] {
    std::vector<std::string> c = {"epoch", "phase"};
    for (const auto& [name, member] : numeric_fields()) c.emplace_back(name);
    return c;
  }();
  return cols;
}

std::string TrainLog::csv() const {
  std::string out;
  for (std::size_t i = 0; i < columns().size(); ++i) out += (i ? "," : "") + columns()[i];
  out += '\n';
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + ',' + r.phase;
    for (const auto& [name, member] : numeric_fields()) out += ',' + fmt(r.*member);
    out += '\n';
  }
  return out;
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << csv();
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

model::ModelParams with_values(const model::ModelParams& like, numcore::ParameterSet values) {
  model::ModelParams p{like.dims, like.localizer, std::move(values)};
  return p;
}

}  // namespace

void save_train_state(const TrainState& state, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  model::save_checkpoint(dir / "params.ckpt", state.params);
  model::save_checkpoint(dir / "adam_m.ckpt", with_values(state.params, state.adam.m));
  model::save_checkpoint(dir / "adam_v.ckpt", with_values(state.params, state.adam.v));
  model::save_checkpoint(dir / "best.ckpt", state.best_epoch >= 0 ? state.best : state.params);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : state.log.rows) {
    nlohmann::json row = {{"epoch", r.epoch}, {"phase", r.phase}};
    for (const auto& [name, member] : numeric_fields()) row[name] = r.*member;
    rows.push_back(std::move(row));
  }
  nlohmann::json j = {{"version", kStateVersion},
                      {"next_epoch", state.next_epoch},
                      {"lr", state.lr},
                      {"best_epoch", state.best_epoch},
                      {"best_val", state.best_epoch >= 0 ? nlohmann::json(state.best_val) : nlohmann::json()},
                      {"adam_step", state.adam.step},
                      {"log", rows}};
  std::ofstream out(dir / "state.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "state.json").string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("write failed for " + (dir / "state.json").string());
}

TrainState load_train_state(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw IoError("cannot open " + (dir / "state.json").string());
  TrainState s;
  try {
    const nlohmann::json j = nlohmann::json::parse(in);
    if (j.at("version") != kStateVersion) throw VersionError("unsupported train state version " + j.at("version").dump());
    s.next_epoch = j.at("next_epoch").get<int>();
    s.lr = j.at("lr").get<double>();
    s.best_epoch = j.at("best_epoch").get<int>();
    s.best_val = s.best_epoch >= 0 ? j.at("best_val").get<double>() : std::numeric_limits<double>::infinity();
    s.adam.step = j.at("adam_step").get<std::int64_t>();
    for (const auto& r : j.at("log")) {
      LogRow row;
      row.epoch = r.at("epoch").get<int>();
      row.phase = r.at("phase").get<std::string>();
      for (const auto& [name, member] : numeric_fields()) row.*member = r.at(name).get<double>();
      s.log.rows.push_back(std::move(row));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError((dir / "state.json").string() + ": " + e.what());
  }
  s.params = model::load_checkpoint(dir / "params.ckpt");
  s.adam.m = model::load_checkpoint(dir / "adam_m.ckpt").values;
  s.adam.v = model::load_checkpoint(dir / "adam_v.ckpt").values;
  s.best = model::load_checkpoint(dir / "best.ckpt");
  return s;
}

}  // namespace cycleground::training
