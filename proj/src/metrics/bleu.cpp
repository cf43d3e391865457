#include "cycleground/metrics/bleu.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>

#include "cycleground/errors.hpp"

namespace cycleground::metrics {

namespace {

constexpr double kZeroPrecision = 1e-9;

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const Tokens& tokens, int n) {
  NgramCounts counts;
  const auto len = static_cast<int>(tokens.size());
  for (int i = 0; i + n <= len; ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + i, tokens.begin() + i + n)];
  }
  return counts;
}

}  // namespace

BleuScores bleu(const std::vector<Tokens>& candidates,
                const std::vector<std::vector<Tokens>>& references, int max_n) {
  if (candidates.empty()) throw UsageError("bleu: empty candidate set");
  if (candidates.size() != references.size()) {
    throw UsageError("bleu: " + std::to_string(candidates.size()) + " candidates but " +
                     std::to_string(references.size()) + " reference sets");
  }
  if (max_n < 1 || max_n > 4) throw UsageError("bleu: max_n must be in 1..4");

  std::vector<double> matched(static_cast<std::size_t>(max_n), 0.0);
  std::vector<double> total(static_cast<std::size_t>(max_n), 0.0);
  BleuScores out;

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Tokens& cand = candidates[i];
    const auto& refs = references[i];
    if (refs.empty()) throw UsageError("bleu: candidate " + std::to_string(i) + " has no references");

    out.candidate_length += cand.size();
    std::size_t best = refs.front().size();
    for (const auto& r : refs) {
      const auto diff = [&](std::size_t len) {
        return len > cand.size() ? len - cand.size() : cand.size() - len;
      };
      if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
    }
    out.reference_length += best;

    for (int n = 1; n <= max_n; ++n) {
      const NgramCounts cand_counts = count_ngrams(cand, n);
      NgramCounts max_ref;
      for (const auto& r : refs) {
        for (const auto& [gram, c] : count_ngrams(r, n)) max_ref[gram] = std::max(max_ref[gram], c);
      }
      for (const auto& [gram, c] : cand_counts) {
        const auto it = max_ref.find(gram);
        matched[static_cast<std::size_t>(n - 1)] += std::min(c, it == max_ref.end() ? 0 : it->second);
        total[static_cast<std::size_t>(n - 1)] += c;
      }
    }
  }

  const double c = static_cast<double>(out.candidate_length);
  const double r = static_cast<double>(out.reference_length);
  out.brevity_penalty = c == 0.0 ? 0.0 : (c > r ? 1.0 : std::exp(1.0 - r / c));

  double log_sum = 0.0;
  for (int n = 1; n <= max_n; ++n) {
    const auto k = static_cast<std::size_t>(n - 1);
    double p = total[k] > 0.0 ? matched[k] / total[k] : 0.0;
    out.precisions.push_back(p);
    if (p == 0.0) p = kZeroPrecision;
    log_sum += std::log(p);
    out.scores.push_back(out.brevity_penalty * std::exp(log_sum / n));
  }
  return out;
}

}  // namespace cycleground::metrics
