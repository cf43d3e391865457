#include "cycleground/metrics/grounding.hpp"

#include <algorithm>

#include "cycleground/errors.hpp"

namespace cycleground::metrics {

void GtPool::add(int word, const Box& box) {
  box.validate();
  for (auto& e : entries_) {
    if (e.word == word) {
      if (std::find(e.boxes.begin(), e.boxes.end(), box) == e.boxes.end()) e.boxes.push_back(box);
      return;
    }
  }
  entries_.push_back({word, {box}});
}

SentenceEval sentence_counts(std::span<const PredictedObject> predicted, const GtPool& pool) {
  SentenceEval ev;
  ev.A = static_cast<int>(predicted.size());
  ev.B = static_cast<int>(pool.entries().size());
  for (const auto& e : pool.entries()) ev.gt.push_back({e.word, false, false});

  for (const auto& p : predicted) {
    SentenceEval::Outcome out{p.word, false, false};
    for (std::size_t k = 0; k < pool.entries().size(); ++k) {
      const GtEntry& entry = pool.entries()[k];
      if (entry.word != p.word || ev.gt[k].matched) continue;
      out.matched = true;
      out.localized = p.box && std::any_of(entry.boxes.begin(), entry.boxes.end(),
                                           [&](const Box& g) { return iou(*p.box, g) > kIouThreshold; });
      ev.gt[k].matched = true;
      ev.gt[k].localized = out.localized;
      break;
    }
    ev.C += out.matched ? 1 : 0;
    ev.E += out.localized ? 1 : 0;
    ev.predicted.push_back(out);
  }
  ev.D = static_cast<int>(std::count_if(ev.gt.begin(), ev.gt.end(), [](const auto& o) { return o.matched; }));
  return ev;
}

double safe_ratio(double numerator, double denominator) {
  return denominator > 0.0 ? numerator / denominator : 0.0;
}

double f1(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

PrecRec scores_from_counts(int A, int B, int C, int D, int E) {
  PrecRec s;
  s.prec_all = safe_ratio(E, A);
  s.rec_all = safe_ratio(E, B);
  s.f1_all = f1(s.prec_all, s.rec_all);
  s.prec_loc = safe_ratio(E, C);
  s.rec_loc = safe_ratio(E, D);
  s.f1_loc = f1(s.prec_loc, s.rec_loc);
  return s;
}

ClassReport f1_per_class(std::span<const SentenceEval> sentences, std::span<const int> class_words) {
  ClassReport report;
  for (int word : class_words) {
    ClassScore cs;
    cs.word = word;
    for (const auto& s : sentences) {
      for (const auto& p : s.predicted) {
        if (p.word != word) continue;
        ++cs.A;
        cs.C += p.matched ? 1 : 0;
        cs.E += p.localized ? 1 : 0;
      }
      for (const auto& g : s.gt) {
        if (g.word != word) continue;
        ++cs.B;
        cs.D += g.matched ? 1 : 0;
      }
    }
    if (cs.A > 0) cs.scores = scores_from_counts(cs.A, cs.B, cs.C, cs.D, cs.E);
    report.classes.push_back(cs);
  }
  if (!report.classes.empty()) {
    const double n = static_cast<double>(report.classes.size());
    for (const auto& c : report.classes) {
      report.macro.prec_all += c.scores.prec_all / n;
      report.macro.rec_all += c.scores.rec_all / n;
      report.macro.f1_all += c.scores.f1_all / n;
      report.macro.prec_loc += c.scores.prec_loc / n;
      report.macro.rec_loc += c.scores.rec_loc / n;
      report.macro.f1_loc += c.scores.f1_loc / n;
    }
  }
  return report;
}

PrecRec f1_per_sentence(std::span<const SentenceEval> sentences) {
  if (sentences.empty()) throw UsageError("f1_per_sentence: no sentences");
  PrecRec mean;
  const double n = static_cast<double>(sentences.size());
  for (const auto& s : sentences) {
    const PrecRec r = scores_from_counts(s.A, s.B, s.C, s.D, s.E);
    mean.prec_all += r.prec_all / n;
    mean.rec_all += r.rec_all / n;
    mean.f1_all += r.f1_all / n;
    mean.prec_loc += r.prec_loc / n;
    mean.rec_loc += r.rec_loc / n;
    mean.f1_loc += r.f1_loc / n;
  }
  return mean;
}

}  // namespace cycleground::metrics
