#pragma once

// Brute-force recount of the grounding statistics. A predicted word matches
// iff it is the first occurrence of a pool word in the sentence; it localizes
// iff that occurrence's box overlaps any GT box of the word by more than 0.5.

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "cycleground/metrics/grounding.hpp"
#include "cycleground/numcore/rng.hpp"

namespace oracle {

using cycleground::metrics::Box;

struct Sentence {
  std::vector<cycleground::metrics::PredictedObject> predicted;
  std::map<int, std::vector<Box>> pool;
};

struct Counts {
  int A, B, C, D, E;
};

inline bool hits(const std::optional<Box>& box, const std::vector<Box>& gts) {
  if (!box) return false;
  for (const auto& g : gts) {
    const double ix = std::max(0.0, std::min(box->x2, g.x2) - std::max(box->x1, g.x1));
    const double iy = std::max(0.0, std::min(box->y2, g.y2) - std::max(box->y1, g.y1));
    const double inter = ix * iy;
    if (inter / (box->area() + g.area() - inter) > 0.5) return true;
  }
  return false;
}

inline Counts counts(const Sentence& s, int only_word = -1) {
  Counts c{0, 0, 0, 0, 0};
  std::set<int> seen;
  for (const auto& p : s.predicted) {
    if (only_word >= 0 && p.word != only_word) continue;
    ++c.A;
    const bool first = seen.insert(p.word).second;
    if (first && s.pool.count(p.word)) {
      ++c.C;
      ++c.D;
      c.E += hits(p.box, s.pool.at(p.word)) ? 1 : 0;
    }
  }
  for (const auto& [w, boxes] : s.pool) c.B += only_word < 0 || w == only_word ? 1 : 0;
  return c;
}

inline double ratio(double a, double b) { return b == 0.0 ? 0.0 : a / b; }
inline double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

/// Object words are 10..14; boxes come from four disjoint slots, shifted so
/// that some overlap by more and some by less than 0.5.
inline Sentence random_sentence(cycleground::numcore::Rng& rng) {
  static const Box slots[] = {{0.0, 0.0, 0.4, 0.4}, {0.5, 0.0, 0.9, 0.4}, {0.0, 0.5, 0.4, 0.9}, {0.5, 0.5, 0.9, 0.9}};
  Sentence s;
  const int gt_objects = static_cast<int>(rng.below(5));
  for (int i = 0; i < gt_objects; ++i) {
    s.pool[10 + static_cast<int>(rng.below(5))].push_back(slots[rng.below(4)]);
  }
  const int pred_objects = static_cast<int>(rng.below(5));
  for (int i = 0; i < pred_objects; ++i) {
    cycleground::metrics::PredictedObject p;
    p.word = 10 + static_cast<int>(rng.below(5));
    const auto kind = rng.below(4);
    if (kind == 0) {
      p.box = std::nullopt;
    } else {
      Box b = slots[rng.below(4)];
      const double shift = kind == 1 ? 0.0 : (kind == 2 ? 0.05 : 0.2);
      b.x1 += shift;
      b.x2 += shift;
      p.box = b;
    }
    s.predicted.push_back(p);
  }
  return s;
}

inline cycleground::metrics::GtPool pool_of(const Sentence& s) {
  cycleground::metrics::GtPool pool;
  for (const auto& [w, boxes] : s.pool) {
    for (const auto& b : boxes) pool.add(w, b);
  }
  return pool;
}

inline const std::vector<int>& classes() {
  static const std::vector<int> c = {10, 11, 12, 13, 14};
  return c;
}

/// Expected per-sentence means and per-class scores for one instance.
struct Expected {
  double f1_all_per_sent = 0.0;
  double f1_loc_per_sent = 0.0;
  std::vector<Counts> class_counts;
  std::vector<double> class_f1_all;
  std::vector<double> class_f1_loc;
  double macro_f1_all = 0.0;
  double macro_f1_loc = 0.0;
};

inline Expected expected(const std::vector<Sentence>& sentences) {
  Expected e;
  const double n = static_cast<double>(sentences.size());
  for (const auto& s : sentences) {
    const auto o = counts(s);
    e.f1_all_per_sent += harmonic(ratio(o.E, o.A), ratio(o.E, o.B)) / n;
    e.f1_loc_per_sent += harmonic(ratio(o.E, o.C), ratio(o.E, o.D)) / n;
  }
  const double k = static_cast<double>(classes().size());
  for (int word : classes()) {
    Counts sum{0, 0, 0, 0, 0};
    for (const auto& s : sentences) {
      const auto o = counts(s, word);
      sum.A += o.A;
      sum.B += o.B;
      sum.C += o.C;
      sum.D += o.D;
      sum.E += o.E;
    }
    const double fa = harmonic(ratio(sum.E, sum.A), ratio(sum.E, sum.B));
    const double fl = harmonic(ratio(sum.E, sum.C), ratio(sum.E, sum.D));
    e.class_counts.push_back(sum);
    e.class_f1_all.push_back(fa);
    e.class_f1_loc.push_back(fl);
    e.macro_f1_all += fa / k;
    e.macro_f1_loc += fl / k;
  }
  return e;
}

}  // namespace oracle
