#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "cycleground/errors.hpp"
#include "cycleground/metrics/bleu.hpp"
#include "cycleground/metrics/box.hpp"
#include "cycleground/metrics/evaluate.hpp"
#include "cycleground/model/checkpoint.hpp"
#include "cycleground/synthdata/scene.hpp"
#include "cycleground/synthdata/world.hpp"
#include "cycleground/training/config.hpp"
#include "cycleground/training/experiment.hpp"
#include "cycleground/training/gradcheck_run.hpp"
#include "cycleground/training/trainer.hpp"

namespace py = pybind11;
namespace cg = cycleground;
namespace fs = std::filesystem;

namespace {

nlohmann::json to_json(const py::object& obj) {
  if (obj.is_none()) return nlohmann::json::object();
  const auto text = py::module_::import("json").attr("dumps")(obj).cast<std::string>();
  return nlohmann::json::parse(text);
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

cg::metrics::Box box_of(const std::vector<double>& v) {
  if (v.size() != 4) throw cg::ValidationError("a box has four coordinates (x1, y1, x2, y2)");
  return {v[0], v[1], v[2], v[3]};
}

const std::vector<cg::synthdata::Scene>& split_of(const cg::synthdata::Dataset& data, const std::string& split) {
  if (split == "train") return data.train;
  if (split == "val") return data.val;
  if (split == "test") return data.test;
  throw cg::UsageError("split must be train, val or test");
}

py::dict generate_dataset(const std::string& out_dir, const py::object& spec) {
  const auto world = cg::synthdata::gen_world(cg::synthdata::world_spec_from_json(to_json(spec)));
  const auto data = cg::synthdata::gen_dataset(world);
  cg::synthdata::save_dataset(world, data, out_dir);
  py::dict sizes;
  sizes["train"] = data.train.size();
  sizes["val"] = data.val.size();
  sizes["test"] = data.test.size();
  return sizes;
}

py::dict train(const std::string& data_dir, const std::string& out_dir, const py::object& config_obj,
               const std::string& mode) {
  auto config = cg::training::train_config_from_json(to_json(config_obj));
  const bool baseline = mode == "baseline";
  if (!baseline && mode != "cyclical") throw cg::UsageError("mode must be baseline or cyclical");
  if (baseline) {
    config.lambda_reconstruct = 0.0;
    config.attention_consistency = 0.0;
  }
  config.validate();
  const auto loaded = cg::synthdata::load_dataset(data_dir);
  cg::training::TrainResult result;
  {
    py::gil_scoped_release release;
    result = baseline ? cg::training::train_baseline(loaded.world, loaded.data, config)
                      : cg::training::train(loaded.world, loaded.data, config);
  }
  const fs::path out = out_dir;
  fs::create_directories(out);
  cg::model::save_checkpoint(out / "best.ckpt", result.best);
  cg::model::save_checkpoint(out / "last.ckpt", result.last);
  result.log.write_csv(out / "train_log.csv");
  py::dict d;
  d["best_epoch"] = result.best_epoch;
  d["best_val"] = result.best_val;
  d["log_csv"] = result.log.csv();
  d["checkpoint"] = (out / "best.ckpt").string();
  return d;
}

py::object evaluate(const std::string& data_dir, const std::string& checkpoint, const std::string& split, int max_len) {
  const auto loaded = cg::synthdata::load_dataset(data_dir);
  const auto params = cg::model::load_checkpoint(checkpoint);
  cg::metrics::GroundingReport report;
  {
    py::gil_scoped_release release;
    report = cg::metrics::evaluate(params, split_of(loaded.data, split), loaded.world.vocab, max_len);
  }
  return to_py(report.to_json(loaded.world.vocab));
}

py::dict gradcheck(const py::object& config_obj) {
  const auto config = cg::training::gradcheck_config_from_json(to_json(config_obj));
  const auto report = cg::training::run_gradcheck(config);
  py::list params;
  for (const auto& p : report.params) {
    py::dict e;
    e["name"] = p.name;
    e["max_rel_error"] = p.max_rel_error;
    params.append(e);
  }
  py::dict d;
  d["max_rel_error"] = report.max_rel_error;
  d["passed"] = report.passed(config.tolerance);
  d["params"] = params;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Cyclical grounding captioner: data generation, training, evaluation and metrics.";

  auto base = py::register_exception<cg::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<cg::UsageError>(m, "UsageError", base.ptr());
  py::register_exception<cg::ValidationError>(m, "ValidationError", base.ptr());
  py::register_exception<cg::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<cg::NumericError>(m, "NumericError", base.ptr());
  py::register_exception<cg::ParseError>(m, "ParseError", base.ptr());
  py::register_exception<cg::VersionError>(m, "VersionError", base.ptr());
  py::register_exception<cg::GenerationError>(m, "GenerationError", base.ptr());
  py::register_exception<cg::IoError>(m, "IoError", base.ptr());

  m.def("world_spec_defaults", [] { return to_py(cg::synthdata::to_json(cg::synthdata::WorldSpec{})); });
  m.def("train_config_defaults", [] { return to_py(cg::training::to_json(cg::training::TrainConfig{})); });

  m.def("generate_dataset", &generate_dataset, py::arg("out_dir"), py::arg("spec") = py::none(),
        "Writes world.json and the three JSONL splits; returns the split sizes.");
  m.def("train", &train, py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = py::none(),
        py::arg("mode") = "cyclical",
        "Trains on a generated dataset and writes best.ckpt, last.ckpt and train_log.csv.");
  m.def("evaluate", &evaluate, py::arg("data_dir"), py::arg("checkpoint"), py::arg("split") = "test",
        py::arg("max_len") = 16, "Grounding, BLEU and attention-accuracy report for one split.");
  m.def("gradcheck", &gradcheck, py::arg("config") = py::none(),
        "Finite-difference check of every parameter gradient of the full cyclical loss.");

  m.def(
      "iou", [](const std::vector<double>& a, const std::vector<double>& b) {
        return cg::metrics::iou(box_of(a), box_of(b));
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "bleu",
      [](const std::vector<cg::metrics::Tokens>& candidates,
         const std::vector<std::vector<cg::metrics::Tokens>>& references, int max_n) {
        return cg::metrics::bleu(candidates, references, max_n).scores;
      },
      py::arg("candidates"), py::arg("references"), py::arg("max_n") = 4, "Corpus BLEU-1..max_n.");
}
