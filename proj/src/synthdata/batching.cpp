#include "cycleground/synthdata/batching.hpp"

#include <algorithm>

#include "cycleground/errors.hpp"

namespace cycleground::synthdata {

std::vector<Example> examples_of(const std::vector<Scene>& scenes) {
  std::vector<Example> out;
  for (std::size_t s = 0; s < scenes.size(); ++s) {
    for (std::size_t c = 0; c < scenes[s].captions.size(); ++c) {
      out.push_back({static_cast<int>(s), static_cast<int>(c)});
    }
  }
  return out;
}

model::Batch make_batch(const std::vector<Scene>& scenes, std::span<const Example> examples,
                        const model::Vocabulary& vocab) {
  if (examples.empty()) throw UsageError("make_batch: no examples");
  const auto& first = scenes.at(static_cast<std::size_t>(examples.front().scene));
  const Index N = first.features.rows();
  const Index dr = first.features.cols();
  const auto B = static_cast<Index>(examples.size());

  model::Batch batch;
  batch.size = B;
  batch.regions = N;
  batch.features = Matrix(B * N, dr);
  batch.boxes = Matrix(B * N, 4);

  std::size_t steps = 0;
  for (const auto& ex : examples) {
    const auto& scene = scenes.at(static_cast<std::size_t>(ex.scene));
    steps = std::max(steps, scene.captions.at(static_cast<std::size_t>(ex.caption)).tokens.size() - 1);
  }
  const auto Bs = static_cast<std::size_t>(B);
  batch.inputs.assign(steps, std::vector<int>(Bs, model::Vocabulary::kPad));
  batch.targets.assign(steps, std::vector<int>(Bs, model::Vocabulary::kPad));
  batch.groundable.assign(steps, std::vector<bool>(Bs, false));
  batch.lengths.assign(Bs, 0);

  for (std::size_t b = 0; b < Bs; ++b) {
    const auto& scene = scenes.at(static_cast<std::size_t>(examples[b].scene));
    if (scene.features.rows() != N || scene.features.cols() != dr) {
      throw DimensionError("make_batch: scenes differ in region count or feature width");
    }
    const auto bi = static_cast<Index>(b);
    batch.features.middleRows(bi * N, N) = scene.features;
    for (Index n = 0; n < N; ++n) {
      const auto& box = scene.boxes[static_cast<std::size_t>(n)];
      batch.boxes.row(bi * N + n) << box.x1, box.y1, box.x2, box.y2;
    }
    const auto& tokens = scene.captions.at(static_cast<std::size_t>(examples[b].caption)).tokens;
    for (std::size_t t = 0; t + 1 < tokens.size(); ++t) {
      batch.inputs[t][b] = tokens[t];
      batch.targets[t][b] = tokens[t + 1];
      batch.groundable[t][b] = vocab.is_groundable(tokens[t + 1]);
    }
    batch.lengths[b] = static_cast<int>(tokens.size() - 1);
  }
  return batch;
}

}  // namespace cycleground::synthdata
