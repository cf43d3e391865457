#pragma once

#include <span>
#include <vector>

#include "cycleground/model/captioner.hpp"
#include "cycleground/synthdata/scene.hpp"

namespace cycleground::synthdata {


/// One (scene, caption) training pair.
struct Example {
  int scene = 0;
  int caption = 0;
};

/// Every caption of every scene, in scene order.
std::vector<Example> examples_of(const std::vector<Scene>& scenes);

/// Packs examples into a padded, time-major teacher-forcing batch. All scenes
/// must have the same region count and feature width.
model::Batch make_batch(const std::vector<Scene>& scenes, std::span<const Example> examples,
                        const model::Vocabulary& vocab);

}  // namespace cycleground::synthdata
