#include <cmath>
#include <tuple>

#include <gtest/gtest.h>

#include "cycleground/errors.hpp"
#include "cycleground/metrics/bleu.hpp"
#include "cycleground/metrics/evaluate.hpp"
#include "cycleground/metrics/grounding.hpp"
#include "cycleground/model/params.hpp"
#include "cycleground/numcore/rng.hpp"
#include "cycleground/synthdata/scene.hpp"
#include "grounding_oracle.hpp"

namespace mt = cycleground::metrics;
using mt::Box;

namespace {

mt::Tokens words(std::initializer_list<const char*> w) { return mt::Tokens(w.begin(), w.end()); }

}  // namespace

TEST(Iou, HandExamples) {
  EXPECT_NEAR(mt::iou({0, 0, 2, 2}, {1, 1, 3, 3}), 1.0 / 7.0, 1e-9);
  EXPECT_DOUBLE_EQ(mt::iou({0, 0, 1, 1}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(mt::iou({0, 0, 1, 1}, {2, 2, 3, 3}), 0.0);
  EXPECT_THROW(mt::iou({0, 0, 0, 1}, {0, 0, 1, 1}), cycleground::ValidationError);
}

TEST(Iou, SymmetricAndBounded) {
  cycleground::numcore::Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    const double x = rng.uniform(), y = rng.uniform(), u = rng.uniform(), v = rng.uniform();
    const Box a{x, y, x + rng.uniform(0.01, 1.0), y + rng.uniform(0.01, 1.0)};
    const Box b{u, v, u + rng.uniform(0.01, 1.0), v + rng.uniform(0.01, 1.0)};
    const double ab = mt::iou(a, b);
    EXPECT_EQ(ab, mt::iou(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 1.0);
    EXPECT_NEAR(mt::iou(a, a), 1.0, 1e-15);
  }
}

TEST(SentenceCounts, DogOnMatExample) {
  // Predicted {dog, mat}; GT {cat, mat}; mat attended with IoU 0.6.
  const int cat = 10, dog = 11, mat = 12;
  mt::GtPool pool;
  pool.add(cat, {0.0, 0.0, 0.5, 0.5});
  pool.add(mat, {0.0, 0.0, 1.0, 0.5});
  const Box mat_pred{0.0, 0.0, 0.6, 0.5};
  ASSERT_NEAR(mt::iou(mat_pred, {0.0, 0.0, 1.0, 0.5}), 0.6, 1e-12);
  const std::vector<mt::PredictedObject> pred = {{dog, Box{0.5, 0.5, 0.9, 0.9}}, {mat, mat_pred}};
  const auto ev = mt::sentence_counts(pred, pool);
  EXPECT_EQ(ev.A, 2);
  EXPECT_EQ(ev.B, 2);
  EXPECT_EQ(ev.C, 1);
  EXPECT_EQ(ev.D, 1);
  EXPECT_EQ(ev.E, 1);
  const auto s = mt::scores_from_counts(ev.A, ev.B, ev.C, ev.D, ev.E);
  EXPECT_DOUBLE_EQ(s.prec_all, 0.5);
  EXPECT_DOUBLE_EQ(s.rec_all, 0.5);
  EXPECT_DOUBLE_EQ(s.prec_loc, 1.0);
  EXPECT_DOUBLE_EQ(s.rec_loc, 1.0);
}

TEST(SentenceCounts, PerfectAndEmptySentences) {
  mt::GtPool pool;
  pool.add(10, {0, 0, 0.5, 0.5});
  pool.add(11, {0.5, 0.5, 1, 1});
  const std::vector<mt::PredictedObject> perfect = {{10, Box{0, 0, 0.5, 0.5}}, {11, Box{0.5, 0.5, 1, 1}}};
  const auto good = mt::sentence_counts(perfect, pool);
  const auto empty = mt::sentence_counts({}, pool);
  EXPECT_EQ(good.E, 2);
  EXPECT_EQ(empty.A, 0);
  EXPECT_EQ(empty.C, 0);
  EXPECT_EQ(empty.E, 0);
  const auto both = mt::f1_per_sentence(std::vector<mt::SentenceEval>{good, empty});
  EXPECT_DOUBLE_EQ(both.f1_all, 0.5);
  EXPECT_DOUBLE_EQ(both.f1_loc, 0.5);
  EXPECT_THROW(mt::f1_per_sentence(std::vector<mt::SentenceEval>{}), cycleground::UsageError);
}

TEST(SentenceCounts, RepeatedWordConsumesThePoolEntryOnce) {
  mt::GtPool pool;
  pool.add(10, {0, 0, 0.5, 0.5});
  pool.add(10, {0.5, 0.5, 1, 1});
  ASSERT_EQ(pool.entries().size(), 1u);
  const std::vector<mt::PredictedObject> pred = {{10, std::nullopt}, {10, Box{0.5, 0.5, 1, 1}}};
  const auto ev = mt::sentence_counts(pred, pool);
  EXPECT_EQ(ev.A, 2);
  EXPECT_EQ(ev.B, 1);
  EXPECT_EQ(ev.C, 1);
  EXPECT_EQ(ev.D, 1);
  EXPECT_EQ(ev.E, 0);
}

TEST(GroundingOracle, HundredRandomInstancesMatchExactly) {
  cycleground::numcore::Rng rng(2024);
  for (int instance = 0; instance < 100; ++instance) {
    const int n = 1 + static_cast<int>(rng.below(5));
    std::vector<oracle::Sentence> sentences;
    std::vector<mt::SentenceEval> evals;
    for (int i = 0; i < n; ++i) {
      sentences.push_back(oracle::random_sentence(rng));
      evals.push_back(mt::sentence_counts(sentences.back().predicted, oracle::pool_of(sentences.back())));
      const auto o = oracle::counts(sentences.back());
      const auto& e = evals.back();
      ASSERT_EQ(std::tie(e.A, e.B, e.C, e.D, e.E), std::tie(o.A, o.B, o.C, o.D, o.E)) << "instance " << instance;
      EXPECT_LE(e.E, e.C);
      EXPECT_LE(e.C, e.A);
      EXPECT_LE(e.E, e.D);
      EXPECT_LE(e.D, e.B);
    }
    const auto want = oracle::expected(sentences);
    const auto per_sent = mt::f1_per_sentence(evals);
    EXPECT_EQ(per_sent.f1_all, want.f1_all_per_sent);
    EXPECT_EQ(per_sent.f1_loc, want.f1_loc_per_sent);

    // Unpredicted classes count as zero in the macro average.
    const auto report = mt::f1_per_class(evals, oracle::classes());
    for (std::size_t k = 0; k < oracle::classes().size(); ++k) {
      const auto& c = report.classes[k];
      const auto& sum = want.class_counts[k];
      ASSERT_EQ(std::tie(c.A, c.B, c.C, c.D, c.E), std::tie(sum.A, sum.B, sum.C, sum.D, sum.E));
      EXPECT_EQ(c.scores.f1_all, want.class_f1_all[k]);
      EXPECT_EQ(c.scores.f1_loc, want.class_f1_loc[k]);
    }
    EXPECT_EQ(report.macro.f1_all, want.macro_f1_all);
    EXPECT_EQ(report.macro.f1_loc, want.macro_f1_loc);
  }
}

TEST(PerClass, UnpredictedClassesPullTheMacroDown) {
  mt::GtPool pool;
  pool.add(10, {0, 0, 0.5, 0.5});
  pool.add(11, {0.5, 0.5, 1, 1});
  const std::vector<mt::PredictedObject> pred = {{10, Box{0, 0, 0.5, 0.5}}};
  const std::vector<mt::SentenceEval> evals = {mt::sentence_counts(pred, pool)};
  const std::vector<int> classes = {10, 11};
  const auto report = mt::f1_per_class(evals, classes);
  EXPECT_DOUBLE_EQ(report.classes[0].scores.f1_all, 1.0);
  EXPECT_DOUBLE_EQ(report.classes[1].scores.f1_all, 0.0);
  EXPECT_DOUBLE_EQ(report.macro.f1_all, 0.5);
}

TEST(Bleu, HandExamples) {
  const auto short_cand = mt::bleu({words({"the", "cat"})}, {{words({"the", "cat", "sat"})}}, 1);
  EXPECT_NEAR(short_cand.scores[0], std::exp(1.0 - 3.0 / 2.0), 1e-9);
  EXPECT_NEAR(short_cand.scores[0], 0.6065306597, 1e-9);
  const auto clipped = mt::bleu({words({"the", "the", "the"})}, {{words({"the", "cat"})}}, 1);
  EXPECT_NEAR(clipped.precisions[0], 1.0 / 3.0, 1e-9);
}

TEST(Bleu, IdenticalCorporaScoreOne) {
  const std::vector<mt::Tokens> c = {words({"a", "red", "cat", "near", "a", "dog"}),
                                     words({"a", "blue", "ball", "left_of", "a", "cup"})};
  const auto s = mt::bleu(c, {{c[0]}, {c[1]}}, 4);
  for (double v : s.scores) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Bleu, ClosestReferenceLengthAndErrors) {
  const auto s = mt::bleu({words({"a", "b", "c"})}, {{words({"a"}), words({"a", "b", "c", "d"})}}, 1);
  EXPECT_EQ(s.reference_length, 4u);
  EXPECT_THROW(mt::bleu({}, {}, 1), cycleground::UsageError);
  EXPECT_THROW(mt::bleu({words({"a"})}, {{words({"a"})}}, 5), cycleground::UsageError);
  EXPECT_THROW(mt::bleu({words({"a"})}, {}, 1), cycleground::UsageError);
}

TEST(Bleu, ZeroPrecisionIsSmoothed) {
  const auto s = mt::bleu({words({"x", "y"})}, {{words({"x", "z"})}}, 2);
  EXPECT_NEAR(s.scores[1], std::sqrt(0.5 * 1e-9), 1e-15);
}

TEST(Evaluate, GroundTruthCaptionsScorePerfectly) {
  namespace sd = cycleground::synthdata;
  sd::WorldSpec spec;
  spec.train_size = 1;
  spec.val_size = 1;
  spec.test_size = 30;
  const auto world = sd::gen_world(spec);
  const auto data = sd::gen_dataset(world);
  const auto preds = mt::ground_truth_predictions(data.test, world.vocab);
  const auto report = mt::evaluate_predictions(preds, data.test, world.vocab);
  EXPECT_DOUBLE_EQ(report.per_sentence.f1_all, 1.0);
  EXPECT_DOUBLE_EQ(report.per_sentence.f1_loc, 1.0);
  EXPECT_DOUBLE_EQ(report.bleu.scores[0], 1.0);
  for (const auto& c : report.per_class.classes) {
    if (c.B > 0) {
      EXPECT_DOUBLE_EQ(c.scores.f1_all, 1.0);
    }
  }
}

TEST(Evaluate, UntrainedAttentionIsNearChance) {
  // A random init prefers regions per word, so average over inits.
  namespace sd = cycleground::synthdata;
  sd::WorldSpec spec;
  spec.train_size = 1;
  spec.val_size = 1;
  spec.test_size = 100;
  const auto world = sd::gen_world(spec);
  const auto data = sd::gen_dataset(world);
  cycleground::model::ModelDims dims;
  dims.vocab = world.vocab.size();
  dims.feature = spec.class_embed_dim;
  dims.classes = spec.num_classes;
  const int inits = 20;
  double decoder = 0.0, localizer = 0.0;
  for (int seed = 0; seed < inits; ++seed) {
    const auto params = cycleground::model::init_params(dims, cycleground::model::LocalizerVariant::Linear,
                                                        static_cast<std::uint64_t>(seed));
    const auto acc = mt::attention_accuracy(params, data.test, world.vocab);
    decoder += acc.decoder / inits;
    localizer += acc.localizer / inits;
  }
  const double chance = 1.0 / spec.scene_regions;
  EXPECT_NEAR(decoder, chance, 0.03);
  EXPECT_NEAR(localizer, chance, 0.03);
}

TEST(Evaluate, PredictionsFileRoundTrip) {
  std::vector<mt::Prediction> preds(2);
  preds[0] = {3, {"a", "cat"}, {std::nullopt, Box{0.1, 0.2, 0.3, 0.4}}};
  preds[1] = {4, {}, {}};
  const auto path = std::filesystem::temp_directory_path() / "cycleground_preds.jsonl";
  mt::save_predictions(preds, path);
  const auto back = mt::load_predictions(path);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].scene_id, 3);
  EXPECT_EQ(back[0].tokens, preds[0].tokens);
  EXPECT_EQ(back[0].attended_boxes, preds[0].attended_boxes);
  EXPECT_TRUE(back[1].tokens.empty());
}
