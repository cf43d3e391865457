#include "cycleground/training/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"

namespace cycleground::training {

const std::vector<std::string>& RunSummary::fields() {
  static const std::vector<std::string> f = {"f1_all",       "f1_loc",        "f1_all_per_sent",
                                             "f1_loc_per_sent", "attention_decoder", "attention_localizer",
                                             "bleu1",        "bleu4"};
  return f;
}

std::vector<double> RunSummary::values() const {
  return {f1_all, f1_loc, f1_all_per_sent, f1_loc_per_sent, attention_decoder, attention_localizer, bleu1, bleu4};
}

RunSummary summarize(const metrics::GroundingReport& report, int best_epoch) {
  RunSummary s;
  s.f1_all = report.per_class.macro.f1_all;
  s.f1_loc = report.per_class.macro.f1_loc;
  s.f1_all_per_sent = report.per_sentence.f1_all;
  s.f1_loc_per_sent = report.per_sentence.f1_loc;
  if (report.attention) {
    s.attention_decoder = report.attention->decoder;
    s.attention_localizer = report.attention->localizer;
  }
  s.bleu1 = report.bleu.scores.at(0);
  s.bleu4 = report.bleu.scores.size() >= 4 ? report.bleu.scores[3] : 0.0;
  s.best_epoch = best_epoch;
  return s;
}

ExperimentResult run_experiment(const synthdata::World& world, const synthdata::Dataset& data,
                                const TrainConfig& config, bool baseline) {
  ExperimentResult r;
  r.train = baseline ? train_baseline(world, data, config) : train(world, data, config);
  r.report = metrics::evaluate(r.train.best, data.test, world.vocab, config.max_caption_len);
  r.summary = summarize(r.report, r.train.best_epoch);
  return r;
}

namespace {

std::string cell_label(const nlohmann::json& overrides, const TrainConfig& c) {
  std::ostringstream os;
  os << "l1=" << c.lambda_decode << ",l2=" << c.lambda_reconstruct;
  for (const auto& [key, value] : overrides.items()) {
    if (key == "lambda_decode" || key == "lambda_reconstruct") continue;
    os << ',' << key << '=' << (value.is_string() ? value.get<std::string>() : value.dump());
  }
  return os.str();
}

}  // namespace

Grid grid_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("grid must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "seeds" && key != "base" && key != "cells") throw ValidationError("grid field '" + key + "': unknown field");
  }
  Grid g;
  try {
    g.seeds = j.value("seeds", std::vector<int>{0, 1, 2, 3, 4});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("grid field 'seeds': ") + e.what());
  }
  if (g.seeds.empty()) throw ValidationError("grid field 'seeds': must not be empty");
  const nlohmann::json base = j.value("base", nlohmann::json::object());
  if (!base.is_object()) throw ValidationError("grid field 'base': must be an object");
  if (!j.contains("cells") || !j.at("cells").is_array() || j.at("cells").empty()) {
    throw ValidationError("grid field 'cells': must be a non-empty array");
  }
  for (const auto& cell : j.at("cells")) {
    if (!cell.is_object()) throw ValidationError("grid field 'cells': every cell must be an object");
    if (cell.contains("seed")) throw ValidationError("grid cell sets 'seed'; use the top-level seeds list");
    nlohmann::json merged = base;
    merged.merge_patch(cell);
    GridCell gc;
    gc.overrides = cell;
    gc.config = train_config_from_json(merged);
    gc.label = cell_label(cell, gc.config);
    g.cells.push_back(std::move(gc));
  }
  std::stable_sort(g.cells.begin(), g.cells.end(), [](const GridCell& a, const GridCell& b) {
    if (a.config.lambda_decode != b.config.lambda_decode) return a.config.lambda_decode < b.config.lambda_decode;
    if (a.config.lambda_reconstruct != b.config.lambda_reconstruct) {
      return a.config.lambda_reconstruct < b.config.lambda_reconstruct;
    }
    return a.label < b.label;
  });
  for (std::size_t i = 1; i < g.cells.size(); ++i) {
    if (g.cells[i].label == g.cells[i - 1].label) throw ValidationError("grid lists cell '" + g.cells[i].label + "' twice");
  }
  return g;
}

Grid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open grid " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return grid_from_json(j);
}

double median(std::vector<double> values) {
  if (values.empty()) throw UsageError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace cycleground::training
