#include "cycleground/metrics/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"
#include "cycleground/model/captioner.hpp"
#include "cycleground/synthdata/batching.hpp"

namespace cycleground::metrics {

namespace {

constexpr std::size_t kChunk = 256;

Box box_of(const synthdata::Scene& scene, int region) { return scene.boxes.at(static_cast<std::size_t>(region)); }

bool hit(const synthdata::Scene& scene, int predicted_region, int gt_region) {
  return iou(box_of(scene, predicted_region), box_of(scene, gt_region)) > kIouThreshold;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

nlohmann::json scores_json(const PrecRec& s) {
  return {{"prec_all", s.prec_all}, {"rec_all", s.rec_all}, {"f1_all", s.f1_all},
          {"prec_loc", s.prec_loc}, {"rec_loc", s.rec_loc}, {"f1_loc", s.f1_loc}};
}

}  // namespace

AttentionAccuracy attention_accuracy(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                                     const model::Vocabulary& vocab) {
  const auto examples = synthdata::examples_of(scenes);
  if (examples.empty()) throw UsageError("attention_accuracy: no scenes");
  int decoder_hits = 0;
  int localizer_hits = 0;
  int annotated = 0;
  for (std::size_t start = 0; start < examples.size(); start += kChunk) {
    const auto chunk = std::span(examples).subspan(start, std::min(kChunk, examples.size() - start));
    const model::Batch batch = synthdata::make_batch(scenes, chunk, vocab);
    numcore::Graph graph;
    const model::BoundParams bound = model::bind(graph, params);
    model::CycleOptions options;
    options.run_cycle = true;
    options.localizer_words = &batch.targets;
    const auto out = model::cyclical_forward(graph, bound, params.dims, batch, options);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const auto& scene = scenes[static_cast<std::size_t>(chunk[b].scene)];
      const auto& caption = scene.captions[static_cast<std::size_t>(chunk[b].caption)];
      for (const auto& a : caption.alignments) {
        const auto step = static_cast<std::size_t>(a.position - 1);
        const auto row = static_cast<Eigen::Index>(b);
        Eigen::Index best_alpha = 0;
        Eigen::Index best_beta = 0;
        out.alphas[step].value().row(row).maxCoeff(&best_alpha);
        out.betas[step].value().row(row).maxCoeff(&best_beta);
        decoder_hits += hit(scene, static_cast<int>(best_alpha), a.region) ? 1 : 0;
        localizer_hits += hit(scene, static_cast<int>(best_beta), a.region) ? 1 : 0;
        ++annotated;
      }
    }
  }
  if (annotated == 0) throw UsageError("attention_accuracy: no aligned positions");
  return {static_cast<double>(decoder_hits) / annotated, static_cast<double>(localizer_hits) / annotated, annotated};
}

double attention_accuracy(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                          const model::Vocabulary& vocab, AttentionSource source) {
  const AttentionAccuracy acc = attention_accuracy(params, scenes, vocab);
  return source == AttentionSource::Decoder ? acc.decoder : acc.localizer;
}

std::vector<Prediction> predict(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                                const model::Vocabulary& vocab, int max_len) {
  std::vector<Prediction> out;
  for (std::size_t start = 0; start < scenes.size(); start += kChunk) {
    const std::size_t count = std::min(kChunk, scenes.size() - start);
    std::vector<synthdata::Example> firsts;
    for (std::size_t i = 0; i < count; ++i) firsts.push_back({static_cast<int>(start + i), 0});
    const model::Batch batch = synthdata::make_batch(scenes, firsts, vocab);
    const auto gens = model::generate(params, batch.features, batch.boxes, batch.regions, max_len);
    for (std::size_t i = 0; i < count; ++i) {
      const auto& scene = scenes[start + i];
      Prediction p;
      p.scene_id = static_cast<int>(start + i);
      for (const auto& tr : gens[i].traces) {
        p.tokens.push_back(vocab.token(tr.word_pred));
        p.attended_boxes.push_back(box_of(scene, tr.attended_region));
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::vector<Prediction> ground_truth_predictions(const std::vector<synthdata::Scene>& scenes,
                                                 const model::Vocabulary& vocab) {
  std::vector<Prediction> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    const auto& cap = scenes[s].captions.front();
    Prediction p;
    p.scene_id = static_cast<int>(s);
    for (std::size_t t = 1; t + 1 < cap.tokens.size(); ++t) {
      p.tokens.push_back(vocab.token(cap.tokens[t]));
      std::optional<Box> box;
      for (const auto& a : cap.alignments) {
        if (a.position == static_cast<int>(t)) box = box_of(scenes[s], a.region);
      }
      p.attended_boxes.push_back(box);
    }
    out.push_back(std::move(p));
  }
  return out;
}

GtPool gt_pool(const synthdata::Scene& scene, const model::Vocabulary& vocab) {
  GtPool pool;
  for (const auto& cap : scene.captions) {
    for (const auto& a : cap.alignments) {
      const int word = cap.tokens.at(static_cast<std::size_t>(a.position));
      if (vocab.is_object(word)) pool.add(word, box_of(scene, a.region));
    }
  }
  return pool;
}

GroundingReport evaluate_predictions(const std::vector<Prediction>& predictions,
                                     const std::vector<synthdata::Scene>& scenes, const model::Vocabulary& vocab) {
  if (predictions.empty()) throw UsageError("evaluate: no predictions");
  std::vector<SentenceEval> evals;
  std::vector<Tokens> candidates;
  std::vector<std::vector<Tokens>> references;
  for (const auto& p : predictions) {
    if (p.scene_id < 0 || p.scene_id >= static_cast<int>(scenes.size())) {
      throw ValidationError("prediction refers to scene " + std::to_string(p.scene_id) + " of " +
                            std::to_string(scenes.size()));
    }
    if (p.attended_boxes.size() != p.tokens.size()) {
      throw ValidationError("prediction for scene " + std::to_string(p.scene_id) + " has " +
                            std::to_string(p.tokens.size()) + " tokens but " +
                            std::to_string(p.attended_boxes.size()) + " boxes");
    }
    const auto& scene = scenes[static_cast<std::size_t>(p.scene_id)];
    std::vector<PredictedObject> objects;
    for (std::size_t t = 0; t < p.tokens.size(); ++t) {
      const auto it = std::find(vocab.tokens.begin(), vocab.tokens.end(), p.tokens[t]);
      if (it == vocab.tokens.end()) continue;
      const int word = static_cast<int>(it - vocab.tokens.begin());
      if (vocab.is_object(word)) objects.push_back({word, p.attended_boxes[t]});
    }
    evals.push_back(sentence_counts(objects, gt_pool(scene, vocab)));
    candidates.push_back(p.tokens);
    std::vector<Tokens> refs;
    for (const auto& cap : scene.captions) {
      Tokens words;
      for (std::size_t t = 1; t + 1 < cap.tokens.size(); ++t) words.push_back(vocab.token(cap.tokens[t]));
      refs.push_back(std::move(words));
    }
    references.push_back(std::move(refs));
  }
  GroundingReport r;
  r.per_class = f1_per_class(evals, vocab.object_word_ids());
  r.per_sentence = f1_per_sentence(evals);
  r.bleu = bleu(candidates, references, 4);
  r.sentences = static_cast<int>(evals.size());
  return r;
}

GroundingReport evaluate(const model::ModelParams& params, const std::vector<synthdata::Scene>& scenes,
                         const model::Vocabulary& vocab, int max_len, std::vector<Prediction>* predictions) {
  std::vector<Prediction> preds = predict(params, scenes, vocab, max_len);
  GroundingReport r = evaluate_predictions(preds, scenes, vocab);
  r.attention = attention_accuracy(params, scenes, vocab);
  if (predictions) *predictions = std::move(preds);
  return r;
}

nlohmann::json GroundingReport::to_json(const model::Vocabulary& vocab) const {
  nlohmann::json classes = nlohmann::json::array();
  for (const auto& c : per_class.classes) {
    nlohmann::json entry = scores_json(c.scores);
    entry["word"] = vocab.token(c.word);
    entry["counts"] = {{"A", c.A}, {"B", c.B}, {"C", c.C}, {"D", c.D}, {"E", c.E}};
    classes.push_back(entry);
  }
  nlohmann::json j = {{"version", 1},
                      {"sentences", sentences},
                      {"per_class", classes},
                      {"macro", scores_json(per_class.macro)},
                      {"per_sentence",
                       {{"f1_all_per_sent", per_sentence.f1_all}, {"f1_loc_per_sent", per_sentence.f1_loc}}},
                      {"bleu", bleu.scores}};
  if (attention) {
    j["attention_accuracy"] = {{"decoder", attention->decoder},
                               {"localizer", attention->localizer},
                               {"annotated", attention->annotated}};
  } else {
    j["attention_accuracy"] = nullptr;
  }
  return j;
}

std::string GroundingReport::csv(const model::Vocabulary& vocab) const {
  std::string out = "scope,word,prec_all,rec_all,f1_all,prec_loc,rec_loc,f1_loc\n";
  const auto line = [&](const std::string& scope, const std::string& word, const PrecRec& s) {
    out += scope + ',' + word + ',' + fmt(s.prec_all) + ',' + fmt(s.rec_all) + ',' + fmt(s.f1_all) + ',' +
           fmt(s.prec_loc) + ',' + fmt(s.rec_loc) + ',' + fmt(s.f1_loc) + '\n';
  };
  for (const auto& c : per_class.classes) line("class", vocab.token(c.word), c.scores);
  line("macro", "", per_class.macro);
  line("per_sentence", "", per_sentence);
  return out;
}

void save_predictions(const std::vector<Prediction>& predictions, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : predictions) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : p.attended_boxes) {
      boxes.push_back(b ? nlohmann::json::array({b->x1, b->y1, b->x2, b->y2}) : nlohmann::json());
    }
    out << nlohmann::json{{"scene_id", p.scene_id}, {"tokens", p.tokens}, {"attended_boxes", boxes}}.dump() << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Prediction> load_predictions(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Prediction> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      Prediction p;
      p.scene_id = j.at("scene_id").get<int>();
      p.tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& b : j.at("attended_boxes")) {
        if (b.is_null()) {
          p.attended_boxes.emplace_back();
          continue;
        }
        const auto v = b.get<std::vector<double>>();
        if (v.size() != 4) throw ParseError("box must have four coordinates");
        Box box{v[0], v[1], v[2], v[3]};
        box.validate();
        p.attended_boxes.emplace_back(box);
      }
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const Error& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace cycleground::metrics
