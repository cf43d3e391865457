#pragma once

#include <optional>
#include <span>
#include <vector>

#include "cycleground/metrics/box.hpp"

namespace cycleground::metrics {

/// A localization counts as correct above this IoU.
inline constexpr double kIouThreshold = 0.5;

/// One generated object word and the region it attended to. A word without a
/// box can match the pool but never counts as localized.
struct PredictedObject {
  int word = 0;
  std::optional<Box> box;
};

/// An object word annotated in the ground truth with every box it was
/// grounded to across the scene's captions.
struct GtEntry {
  int word = 0;
  std::vector<Box> boxes;
};

/// Union over all GT captions of a scene, keyed by word: a word mentioned in
/// several captions (or twice in one) is one entry holding all of its boxes.
class GtPool {
 public:
  void add(int word, const Box& box);
  const std::vector<GtEntry>& entries() const { return entries_; }

 private:
  std::vector<GtEntry> entries_;
};

/// Appendix counts for one generated sentence:
///   A generated object words, B GT object words, C generated words matched
///   to the pool, D pool entries matched, E matched and localized (IoU > 0.5
///   against any GT box of that word).
/// Matching is one-to-one and greedy in generation order; each pool entry is
/// consumed at most once.
struct SentenceEval {
  struct Outcome {
    int word = 0;
    bool matched = false;
    bool localized = false;
  };

  int A = 0;
  int B = 0;
  int C = 0;
  int D = 0;
  int E = 0;
  std::vector<Outcome> predicted;  ///< one per generated object word
  std::vector<Outcome> gt;         ///< one per pool entry
};

SentenceEval sentence_counts(std::span<const PredictedObject> predicted, const GtPool& pool);

/// x / y with 0/0 (and x/0) defined as 0.
double safe_ratio(double numerator, double denominator);
double f1(double precision, double recall);

struct PrecRec {
  double prec_all = 0.0;
  double rec_all = 0.0;
  double f1_all = 0.0;
  double prec_loc = 0.0;
  double rec_loc = 0.0;
  double f1_loc = 0.0;
};

/// Prec_all = E/A, Rec_all = E/B, Prec_loc = E/C, Rec_loc = E/D.
PrecRec scores_from_counts(int A, int B, int C, int D, int E);

struct ClassScore {
  int word = 0;
  int A = 0, B = 0, C = 0, D = 0, E = 0;
  PrecRec scores;  ///< all zero when the class was never generated
};

struct ClassReport {
  std::vector<ClassScore> classes;
  PrecRec macro;  ///< unweighted mean over every listed class
};

/// Counts are aggregated per object word over the whole split; a class never
/// generated scores zero but still enters the average.
ClassReport f1_per_class(std::span<const SentenceEval> sentences, std::span<const int> class_words);

/// Per-sentence precision/recall/F1 averaged over sentences. Requires at least
/// one sentence.
PrecRec f1_per_sentence(std::span<const SentenceEval> sentences);

}  // namespace cycleground::metrics
