#pragma once

#include <span>
#include <vector>

#include "cycleground/model/captioner.hpp"

namespace cycleground::training {

using numcore::Index;
using numcore::Matrix;

/// lambda_decode * decode + lambda_reconstruct * reconstruct. A zero
/// reconstruction weight leaves the reconstruction node out of the graph.
numcore::Var total_loss(numcore::Var decode, numcore::Var reconstruct, double lambda_decode,
                        double lambda_reconstruct);

/// sum_t KL(beta_t || alpha_t) over active positions, with beta held fixed as
/// the target and alpha given by its pre-softmax scores. Each example's sum is
/// divided by its token count, then averaged over the batch.
numcore::Var attention_consistency_loss(std::span<const numcore::Var> alpha_scores,
                                        std::span<const numcore::Var> betas, const model::Batch& batch);
/// Same, with the target distributions given as plain values.
numcore::Var attention_consistency_loss(std::span<const numcore::Var> alpha_scores,
                                        std::span<const Matrix> beta_targets, const model::Batch& batch);

/// Per-position reconstruction weights under `mode` for a token sequence
/// (targets only): 1 where the position counts, 0 where it is dropped or its
/// localized region is zeroed.
std::vector<double> apply_word_filter(std::span<const int> targets, const model::Vocabulary& vocab,
                                      model::WordFilter mode);

}  // namespace cycleground::training
