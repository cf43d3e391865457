#pragma once

#include <string>
#include <vector>

namespace cycleground::metrics {

using Tokens = std::vector<std::string>;

/// Corpus BLEU-1..max_n. scores[n-1] is the geometric mean of the clipped
/// 1..n-gram precisions times the brevity penalty. A zero precision is
/// replaced by 1e-9 before taking logs. The reference length for each
/// candidate is the closest reference length (ties go to the shorter).
struct BleuScores {
  std::vector<double> scores;
  std::vector<double> precisions;  ///< clipped modified precision per order
  double brevity_penalty = 1.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

BleuScores bleu(const std::vector<Tokens>& candidates,
                const std::vector<std::vector<Tokens>>& references, int max_n = 4);

}  // namespace cycleground::metrics
