// Command-line front end: gen-data, train, eval, gradcheck, ablate.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"
#include "cycleground/metrics/evaluate.hpp"
#include "cycleground/model/checkpoint.hpp"
#include "cycleground/synthdata/scene.hpp"
#include "cycleground/training/experiment.hpp"
#include "cycleground/training/gradcheck_run.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;
using namespace cycleground;

namespace {

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumeric = 4 };

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void prepare_out(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError(dir.string() + " is not empty; pass --force to overwrite");
  }
  fs::create_directories(dir);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<synthdata::Scene>& split_of(const synthdata::Dataset& data, const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw UsageError("unknown split '" + name + "' (expected train, val or test)");
}

std::size_t worker_count() {
  std::size_t n = 1;
  if (const char* env = std::getenv("CYCLEGROUND_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v < 1) throw UsageError("CYCLEGROUND_THREADS must be a positive integer");
      n = static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
      throw UsageError("CYCLEGROUND_THREADS must be a positive integer");
    }
  } else {
    n = std::max(1u, std::thread::hardware_concurrency());
  }
  return n;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::string spec;
  std::string out;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  const auto start = Clock::now();
  const synthdata::WorldSpec spec = a.spec.empty() ? synthdata::WorldSpec{} : synthdata::load_world_spec(a.spec);
  spec.validate();
  prepare_out(a.out, a.force);
  const synthdata::World world = synthdata::gen_world(spec);
  const synthdata::Dataset data = synthdata::gen_dataset(world);
  synthdata::save_dataset(world, data, a.out);
  cli::RunManifest m;
  m.command = "gen-data";
  m.config = synthdata::to_json(spec);
  m.seeds = {static_cast<int>(spec.seed)};
  m.dataset_hash = cli::directory_hash(a.out);
  m.outputs = {"world.json", "train.jsonl", "val.jsonl", "test.jsonl"};
  m.wall_clock_seconds = seconds_since(start);
  m.write(a.out);
  std::cout << "wrote " << data.train.size() << "/" << data.val.size() << "/" << data.test.size()
            << " scenes to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string mode = "cyclical";
  bool resume = false;
  bool force = false;
};

int cmd_train(const TrainArgs& a) {
  const auto start = Clock::now();
  training::TrainConfig config = a.config.empty() ? training::TrainConfig{} : training::load_train_config(a.config);
  const bool baseline = a.mode == "baseline";
  if (!baseline && a.mode != "cyclical") throw UsageError("--mode must be baseline or cyclical");
  if (baseline) {
    config.lambda_reconstruct = 0.0;
    config.attention_consistency = 0.0;
  }
  config.validate();
  const auto loaded = synthdata::load_dataset(a.data);
  const fs::path out = a.out;
  std::optional<training::TrainState> resume;
  if (a.resume) {
    if (baseline) throw UsageError("--resume is only supported in cyclical mode");
    resume = training::load_train_state(out / "state");
  } else {
    prepare_out(out, a.force);
  }

  training::TrainHooks hooks;
  hooks.on_epoch = [&](const training::TrainState& s) {
    training::save_train_state(s, out / "state");
    const auto& r = s.log.rows.back();
    std::fprintf(stderr, "epoch %d [%s] loss %.4f val %.4f bleu1 %.3f lr %.1e\n", r.epoch, r.phase.c_str(),
                 r.train_loss, r.val_loss, r.val_bleu1, r.lr);
  };
  const training::TrainResult result =
      baseline ? training::train_baseline(loaded.world, loaded.data, config, hooks)
               : training::train(loaded.world, loaded.data, config, hooks, std::move(resume));
  model::save_checkpoint(out / "best.ckpt", result.best);
  model::save_checkpoint(out / "last.ckpt", result.last);
  result.log.write_csv(out / "train_log.csv");

  cli::RunManifest m;
  m.command = std::string("train --mode ") + a.mode + (a.resume ? " --resume" : "");
  m.config = training::to_json(config);
  m.seeds = {static_cast<int>(config.seed)};
  m.dataset_hash = cli::directory_hash(a.data);
  m.outputs = {"best.ckpt", "last.ckpt", "train_log.csv", "state"};
  m.wall_clock_seconds = seconds_since(start);
  m.write(out);
  std::cout << "best epoch " << result.best_epoch << " val loss " << result.best_val << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string out;
  std::string split = "test";
  std::string predictions;
  int max_len = 16;
  bool force = false;
};

int cmd_eval(const EvalArgs& a) {
  const auto start = Clock::now();
  const auto loaded = synthdata::load_dataset(a.data);
  const auto& scenes = split_of(loaded.data, a.split);
  prepare_out(a.out, a.force);
  metrics::GroundingReport report;
  std::vector<metrics::Prediction> preds;
  if (!a.predictions.empty()) {
    preds = metrics::load_predictions(a.predictions);
    report = metrics::evaluate_predictions(preds, scenes, loaded.world.vocab);
  } else {
    if (a.checkpoint.empty()) throw UsageError("eval needs --checkpoint or --predictions");
    const model::ModelParams params = model::load_checkpoint(a.checkpoint);
    if (params.dims.vocab != loaded.world.vocab.size() || params.dims.feature != loaded.world.spec.class_embed_dim ||
        params.dims.classes != loaded.world.spec.num_classes) {
      throw ValidationError("checkpoint dimensions do not match the dataset");
    }
    report = metrics::evaluate(params, scenes, loaded.world.vocab, a.max_len, &preds);
  }
  const fs::path out = a.out;
  write_text(out / "report.json", report.to_json(loaded.world.vocab).dump(2) + "\n");
  write_text(out / "report.csv", report.csv(loaded.world.vocab));
  metrics::save_predictions(preds, out / "predictions.jsonl");

  cli::RunManifest m;
  m.command = "eval";
  m.config = {{"split", a.split}, {"checkpoint", a.checkpoint}, {"predictions", a.predictions}, {"max_len", a.max_len}};
  m.dataset_hash = cli::directory_hash(a.data);
  m.outputs = {"report.json", "report.csv", "predictions.jsonl"};
  m.wall_clock_seconds = seconds_since(start);
  m.write(out);
  std::cout << "F1_all " << report.per_class.macro.f1_all << "  F1_loc " << report.per_class.macro.f1_loc
            << "  F1_all/sent " << report.per_sentence.f1_all << "  F1_loc/sent " << report.per_sentence.f1_loc
            << "  BLEU-1 " << report.bleu.scores[0];
  if (report.attention) {
    std::cout << "  att(dec) " << report.attention->decoder << "  att(loc) " << report.attention->localizer;
  }
  std::cout << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string config;
  std::string report;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  const training::GradcheckConfig config =
      a.config.empty() ? training::GradcheckConfig{} : training::load_gradcheck_config(a.config);
  const numcore::GradCheckReport report = training::run_gradcheck(config);
  const bool ok = report.passed(config.tolerance);
  nlohmann::json rows = nlohmann::json::array();
  std::printf("%-14s %-8s %-12s %-14s %-14s\n", "parameter", "shape", "max_rel_err", "analytic", "numeric");
  for (const auto& p : report.params) {
    std::printf("%-14s %-8s %-12.3e %-14.6e %-14.6e\n", p.name.c_str(), p.shape.str().c_str(), p.max_rel_error,
                p.analytic, p.numeric);
    rows.push_back({{"name", p.name}, {"shape", p.shape.str()}, {"max_rel_error", p.max_rel_error},
                    {"worst_index", p.worst_index}, {"analytic", p.analytic}, {"numeric", p.numeric}});
  }
  if (!a.report.empty()) {
    write_text(a.report, nlohmann::json{{"config", training::to_json(config)},
                                        {"tolerance", config.tolerance},
                                        {"max_rel_error", report.max_rel_error},
                                        {"passed", ok},
                                        {"params", rows}}
                                 .dump(2) +
                             "\n");
  }
  if (ok) {
    std::printf("PASS max relative error %.3e <= %.1e\n", report.max_rel_error, config.tolerance);
    return kOk;
  }
  std::printf("FAIL max relative error %.3e > %.1e; worst offenders:\n", report.max_rel_error, config.tolerance);
  for (const auto& p : report.worst(5)) {
    std::printf("  %s[%ld] rel %.3e analytic %.6e numeric %.6e\n", p.name.c_str(), static_cast<long>(p.worst_index),
                p.max_rel_error, p.analytic, p.numeric);
  }
  return kNumeric;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
  std::string data;
  std::string out;
  std::string grid;
  bool force = false;
};

std::string sanitize(const std::string& label) {
  std::string s;
  for (char c : label) s += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '_';
  return s;
}

int cmd_ablate(const AblateArgs& a) {
  const auto start = Clock::now();
  const training::Grid grid = training::load_grid(a.grid);
  const auto loaded = synthdata::load_dataset(a.data);
  prepare_out(a.out, a.force);
  const fs::path out = a.out;

  struct Job {
    std::size_t cell;
    int seed;
    fs::path dir;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    for (int seed : grid.seeds) {
      jobs.push_back({c, seed, out / (std::to_string(c) + "_" + sanitize(grid.cells[c].label)) /
                                   ("seed" + std::to_string(seed))});
    }
  }
  std::vector<std::optional<training::RunSummary>> results(jobs.size());
  std::vector<std::string> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;
  const std::string dataset_hash = cli::directory_hash(a.data);

  const auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      const Job& job = jobs[i];
      const auto& cell = grid.cells[job.cell];
      try {
        const auto job_start = Clock::now();
        training::TrainConfig config = cell.config;
        config.seed = static_cast<std::uint64_t>(job.seed);
        const auto r = training::run_experiment(loaded.world, loaded.data, config);
        fs::create_directories(job.dir);
        model::save_checkpoint(job.dir / "best.ckpt", r.train.best);
        r.train.log.write_csv(job.dir / "train_log.csv");
        write_text(job.dir / "report.json", r.report.to_json(loaded.world.vocab).dump(2) + "\n");
        cli::RunManifest m;
        m.command = "ablate cell " + cell.label;
        m.config = training::to_json(config);
        m.seeds = {job.seed};
        m.dataset_hash = dataset_hash;
        m.outputs = {"best.ckpt", "train_log.csv", "report.json"};
        m.wall_clock_seconds = seconds_since(job_start);
        m.write(job.dir);
        results[i] = r.summary;
        std::lock_guard lock(log_mutex);
        std::fprintf(stderr, "[%zu/%zu] %s seed %d: F1_loc/sent %.3f att %.3f (%.0fs)\n", i + 1, jobs.size(),
                     cell.label.c_str(), job.seed, r.summary.f1_loc_per_sent, r.summary.attention_decoder,
                     m.wall_clock_seconds);
      } catch (const std::exception& e) {
        errors[i] = e.what();
        std::lock_guard lock(log_mutex);
        std::fprintf(stderr, "[%zu/%zu] %s seed %d failed: %s\n", i + 1, jobs.size(), cell.label.c_str(), job.seed,
                     e.what());
      }
    }
  };
  const std::size_t threads = std::min(worker_count(), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  const auto& fields = training::RunSummary::fields();
  std::string runs = "cell,label,lambda_decode,lambda_reconstruct,seed,status";
  std::string summary = "cell,label,lambda_decode,lambda_reconstruct,completed";
  for (const auto& f : fields) {
    runs += ',' + f;
    summary += ",median_" + f;
  }
  runs += ",best_epoch,error\n";
  summary += '\n';
  std::size_t failures = 0;
  for (std::size_t c = 0; c < grid.cells.size(); ++c) {
    const auto& cell = grid.cells[c];
    std::vector<std::vector<double>> columns(fields.size());
    int completed = 0;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].cell != c) continue;
      runs += std::to_string(c) + ",\"" + cell.label + "\"," + fmt(cell.config.lambda_decode) + ',' +
              fmt(cell.config.lambda_reconstruct) + ',' + std::to_string(jobs[i].seed) + ',' +
              (results[i] ? "ok" : "failed");
      if (results[i]) {
        const auto v = results[i]->values();
        for (std::size_t k = 0; k < v.size(); ++k) {
          runs += ',' + fmt(v[k]);
          columns[k].push_back(v[k]);
        }
        runs += ',' + std::to_string(results[i]->best_epoch) + ",\n";
        ++completed;
      } else {
        for (std::size_t k = 0; k < fields.size(); ++k) runs += ',';
        std::string err = errors[i];
        std::replace(err.begin(), err.end(), '"', '\'');
        runs += ",,\"" + err + "\"\n";
        ++failures;
      }
    }
    summary += std::to_string(c) + ",\"" + cell.label + "\"," + fmt(cell.config.lambda_decode) + ',' +
               fmt(cell.config.lambda_reconstruct) + ',' + std::to_string(completed);
    for (const auto& col : columns) summary += ',' + (col.empty() ? std::string() : fmt(training::median(col)));
    summary += '\n';
  }
  write_text(out / "runs.csv", runs);
  write_text(out / "summary.csv", summary);

  cli::RunManifest m;
  m.command = "ablate";
  std::ifstream grid_in(a.grid);
  m.config = nlohmann::json::parse(grid_in);
  m.seeds = grid.seeds;
  m.dataset_hash = dataset_hash;
  m.outputs = {"runs.csv", "summary.csv"};
  m.wall_clock_seconds = seconds_since(start);
  m.write(out);
  std::cout << summary;
  if (failures > 0) {
    std::fprintf(stderr, "%zu of %zu runs failed\n", failures, jobs.size());
    return kNumeric;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cyclical grounded captioning on synthetic scenes"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset");
  gen_cmd->add_option("--spec", gen.spec, "World spec JSON (defaults when omitted)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_flag("--force", gen.force, "Overwrite a non-empty output directory");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a captioner");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "Training config JSON (defaults when omitted)");
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--mode", tr.mode, "baseline or cyclical")->check(CLI::IsMember({"baseline", "cyclical"}));
  train_cmd->add_flag("--resume", tr.resume, "Continue from <out>/state");
  train_cmd->add_flag("--force", tr.force, "Overwrite a non-empty output directory");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint or a predictions file");
  eval_cmd->add_option("--data", ev.data, "Dataset directory")->required();
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint to evaluate");
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--split", ev.split, "train, val or test");
  eval_cmd->add_option("--predictions", ev.predictions, "Score this predictions JSONL instead of a checkpoint");
  eval_cmd->add_option("--max-len", ev.max_len, "Greedy decoding length limit");
  eval_cmd->add_flag("--force", ev.force, "Overwrite a non-empty output directory");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter gradient");
  gc_cmd->add_option("--config", gc.config, "Gradcheck config JSON (defaults when omitted)");
  gc_cmd->add_option("--report", gc.report, "Write the per-parameter report as JSON");

  AblateArgs ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Run a grid of configs over several seeds");
  ab_cmd->add_option("--data", ab.data, "Dataset directory")->required();
  ab_cmd->add_option("--out", ab.out, "Output directory")->required();
  ab_cmd->add_option("--grid", ab.grid, "Grid JSON")->required();
  ab_cmd->add_flag("--force", ab.force, "Overwrite a non-empty output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*gc_cmd) return cmd_gradcheck(gc);
    if (*ab_cmd) return cmd_ablate(ab);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
