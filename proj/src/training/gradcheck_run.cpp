#include "cycleground/training/gradcheck_run.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"
#include "cycleground/training/losses.hpp"

namespace cycleground::training {

namespace {

void require(bool ok, const char* field, const std::string& why) {
  if (!ok) throw ValidationError(std::string("gradcheck config field '") + field + "': " + why);
}

}  // namespace

void GradcheckConfig::validate() const {
  require(vocab >= 4, "vocab", "must be at least 4");
  require(embed >= 1, "embed", "must be positive");
  require(hidden >= 1, "hidden", "must be positive");
  require(feature >= 1, "feature", "must be positive");
  require(classes >= 1, "classes", "must be positive");
  require(location >= 1, "location", "must be positive");
  require(regions >= 1, "regions", "must be positive");
  require(steps >= 1, "steps", "must be positive");
  require(batch >= 1, "batch", "must be positive");
  require(std::isfinite(eps) && eps > 0.0, "eps", "must be positive");
  require(std::isfinite(tolerance) && tolerance > 0.0, "tolerance", "must be positive");
  require(lambda_decode >= 0.0 && lambda_reconstruct >= 0.0, "lambda_decode", "loss weights must be >= 0");
  require(attention_consistency >= 0.0, "attention_consistency", "must be >= 0");
}

nlohmann::json to_json(const GradcheckConfig& c) {
  return {{"vocab", c.vocab},
          {"embed", c.embed},
          {"hidden", c.hidden},
          {"feature", c.feature},
          {"classes", c.classes},
          {"location", c.location},
          {"regions", c.regions},
          {"steps", c.steps},
          {"batch", c.batch},
          {"eps", c.eps},
          {"tolerance", c.tolerance},
          {"lambda_decode", c.lambda_decode},
          {"lambda_reconstruct", c.lambda_reconstruct},
          {"attention_consistency", c.attention_consistency},
          {"localizer", model::to_string(c.localizer)},
          {"word_filter", model::to_string(c.word_filter)},
          {"seed", c.seed},
          {"inject_tanh_bug", c.inject_tanh_bug}};
}

GradcheckConfig gradcheck_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("gradcheck config must be a JSON object");
  GradcheckConfig c;
  const nlohmann::json defaults = to_json(c);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("gradcheck config field '" + key + "': unknown field");
  }
  const auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("gradcheck config field '") + key + "': " + e.what());
    }
  };
  get("vocab", c.vocab);
  get("embed", c.embed);
  get("hidden", c.hidden);
  get("feature", c.feature);
  get("classes", c.classes);
  get("location", c.location);
  get("regions", c.regions);
  get("steps", c.steps);
  get("batch", c.batch);
  get("eps", c.eps);
  get("tolerance", c.tolerance);
  get("lambda_decode", c.lambda_decode);
  get("lambda_reconstruct", c.lambda_reconstruct);
  get("attention_consistency", c.attention_consistency);
  std::string localizer(model::to_string(c.localizer));
  std::string filter(model::to_string(c.word_filter));
  get("localizer", localizer);
  get("word_filter", filter);
  try {
    c.localizer = model::localizer_variant_from_string(localizer);
    c.word_filter = model::word_filter_from_string(filter);
  } catch (const UsageError& e) {
    throw ValidationError(std::string("gradcheck config: ") + e.what());
  }
  get("seed", c.seed);
  get("inject_tanh_bug", c.inject_tanh_bug);
  c.validate();
  return c;
}

GradcheckConfig load_gradcheck_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open gradcheck config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return gradcheck_config_from_json(j);
}

model::Batch random_batch(const GradcheckConfig& c, numcore::Rng& rng) {
  model::Batch batch;
  batch.size = c.batch;
  batch.regions = c.regions;
  const Index rows = static_cast<Index>(c.batch) * c.regions;
  batch.features = numcore::Matrix(rows, c.feature);
  for (Index i = 0; i < batch.features.size(); ++i) batch.features.data()[i] = rng.normal();
  batch.boxes = numcore::Matrix(rows, 4);
  for (Index r = 0; r < rows; ++r) {
    const double x = rng.uniform(0.0, 0.5);
    const double y = rng.uniform(0.0, 0.5);
    batch.boxes.row(r) << x, y, x + rng.uniform(0.1, 0.5), y + rng.uniform(0.1, 0.5);
  }
  const auto Bs = static_cast<std::size_t>(c.batch);
  const auto T = static_cast<std::size_t>(c.steps);
  batch.inputs.assign(T, std::vector<int>(Bs));
  batch.targets.assign(T, std::vector<int>(Bs));
  batch.groundable.assign(T, std::vector<bool>(Bs));
  batch.lengths.assign(Bs, c.steps);
  const auto word = [&] { return 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(c.vocab - 3))); };
  for (std::size_t b = 0; b < Bs; ++b) {
    int prev = model::Vocabulary::kBos;
    for (std::size_t t = 0; t < T; ++t) {
      const int next = t + 1 == T ? model::Vocabulary::kEos : word();
      batch.inputs[t][b] = prev;
      batch.targets[t][b] = next;
      batch.groundable[t][b] = next % 2 == 1;
      prev = next;
    }
  }
  return batch;
}

numcore::GradCheckReport run_gradcheck(const GradcheckConfig& config) {
  config.validate();
  model::ModelDims dims;
  dims.vocab = config.vocab;
  dims.embed = config.embed;
  dims.hidden = config.hidden;
  dims.feature = config.feature;
  dims.classes = config.classes;
  dims.location = config.location;
  model::ModelParams params = model::init_params(dims, config.localizer, config.seed);
  numcore::Rng rng = numcore::Rng(config.seed).split(0x67726164);  // "grad"
  const model::Batch batch = random_batch(config, rng);

  // The localizer's words and the consistency targets carry no gradient, so
  // the numeric side must hold them fixed too. Both come from one
  // unperturbed pass.
  std::vector<std::vector<int>> words;
  std::vector<numcore::Matrix> beta_targets;
  {
    numcore::Graph graph;
    const model::BoundParams bound = model::bind(graph, params);
    const auto out = model::cyclical_forward(graph, bound, dims, batch, model::CycleOptions{});
    words = out.decoded_words;
    for (const auto& beta : out.betas) {
      beta_targets.push_back(beta.value());
    }
  }

  const numcore::Objective objective = [&](numcore::Graph& graph, const numcore::ParameterSet& values) {
    const model::ModelParams view{dims, config.localizer, values};
    const model::BoundParams bound = model::bind(graph, view);
    model::CycleOptions options;
    options.run_cycle = true;
    options.filter = config.word_filter;
    options.localizer_words = &words;
    const auto out = model::cyclical_forward(graph, bound, dims, batch, options);
    numcore::Var loss =
        total_loss(out.loss_decode, out.loss_reconstruct, config.lambda_decode, config.lambda_reconstruct);
    if (config.attention_consistency != 0.0) {
      const numcore::Var kl =
          attention_consistency_loss(out.alpha_scores, std::span<const numcore::Matrix>(beta_targets), batch);
      loss = numcore::add(loss, numcore::scale(kl, config.attention_consistency));
    }
    return loss;
  };
  numcore::GraphOptions options;
  options.corrupt_tanh_grad = config.inject_tanh_bug;
  return numcore::grad_check(objective, params.values, config.eps, options);
}

}  // namespace cycleground::training
