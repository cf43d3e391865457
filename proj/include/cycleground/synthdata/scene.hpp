#pragma once

#include <filesystem>
#include <utility>
#include <vector>

#include "cycleground/metrics/box.hpp"
#include "cycleground/synthdata/world.hpp"

namespace cycleground::synthdata {

inline constexpr int kBackground = -1;

struct Alignment {
  int position = 0;  ///< index into Caption::tokens
  int region = 0;

  friend bool operator==(const Alignment&, const Alignment&) = default;
};

struct Caption {
  std::vector<int> tokens;  ///< BOS ... EOS
  std::vector<Alignment> alignments;

  friend bool operator==(const Caption&, const Caption&) = default;
};

struct Scene {
  Matrix features;  ///< [N x d_r]
  std::vector<metrics::Box> boxes;
  std::vector<int> classes;  ///< kBackground for distractors
  std::vector<Caption> captions;

  int regions() const { return static_cast<int>(boxes.size()); }
  /// Throws ValidationError on shape mismatches, invalid boxes or an
  /// alignment whose region class does not match its word.
  void validate(const model::Vocabulary& vocab) const;
};

bool operator==(const Scene& a, const Scene& b);

Scene gen_scene(const World& world, numcore::Rng& rng);

struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<Scene> test;
};

/// Scene i of a split is drawn from its own stream derived from
/// (seed, split, i), so the output is independent of generation order.
Dataset gen_dataset(const World& world);

void save_scenes(const std::vector<Scene>& scenes, const model::Vocabulary& vocab,
                 const std::filesystem::path& path);
std::vector<Scene> load_scenes(const std::filesystem::path& path, const model::Vocabulary& vocab);

/// Writes world.json plus train/val/test .jsonl into `dir`.
void save_dataset(const World& world, const Dataset& data, const std::filesystem::path& dir);

struct LoadedData {
  World world;
  Dataset data;
};
LoadedData load_dataset(const std::filesystem::path& dir);

}  // namespace cycleground::synthdata
