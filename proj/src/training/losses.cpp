#include "cycleground/training/losses.hpp"

#include "cycleground/errors.hpp"

namespace cycleground::training {

numcore::Var total_loss(numcore::Var decode, numcore::Var reconstruct, double lambda_decode,
                        double lambda_reconstruct) {
  numcore::Var loss = numcore::scale(decode, lambda_decode);
  if (lambda_reconstruct != 0.0) loss = numcore::add(loss, numcore::scale(reconstruct, lambda_reconstruct));
  return loss;
}

numcore::Var attention_consistency_loss(std::span<const numcore::Var> alpha_scores,
                                        std::span<const numcore::Var> betas, const model::Batch& batch) {
  std::vector<Matrix> targets;
  targets.reserve(betas.size());
  for (const auto& b : betas) targets.push_back(b.value());
  return attention_consistency_loss(alpha_scores, std::span<const Matrix>(targets), batch);
}

numcore::Var attention_consistency_loss(std::span<const numcore::Var> alpha_scores,
                                        std::span<const Matrix> betas, const model::Batch& batch) {
  if (alpha_scores.size() != betas.size() || static_cast<Index>(betas.size()) != batch.steps()) {
    throw DimensionError("attention_consistency_loss: " + std::to_string(alpha_scores.size()) + " alpha steps, " +
                         std::to_string(betas.size()) + " beta steps, batch of " +
                         std::to_string(batch.steps()));
  }
  const auto Bs = static_cast<std::size_t>(batch.size);
  std::vector<double> weights(Bs);
  numcore::Var total;
  for (std::size_t t = 0; t < betas.size(); ++t) {
    for (std::size_t b = 0; b < Bs; ++b) {
      weights[b] = batch.active(static_cast<Index>(t), static_cast<Index>(b))
                       ? 1.0 / (static_cast<double>(batch.size) * batch.lengths[b])
                       : 0.0;
    }
    numcore::Var kl = numcore::kl_divergence(betas[t], alpha_scores[t], weights);
    total = total.valid() ? numcore::add(total, kl) : kl;
  }
  return total;
}

std::vector<double> apply_word_filter(std::span<const int> targets, const model::Vocabulary& vocab,
                                      model::WordFilter mode) {
  std::vector<double> mask(targets.size(), 1.0);
  if (mode == model::WordFilter::None) return mask;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!vocab.is_groundable(targets[i])) mask[i] = 0.0;
  }
  return mask;
}

}  // namespace cycleground::training
