#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cycleground/metrics/box.hpp"
#include "cycleground/model/vocabulary.hpp"
#include "cycleground/numcore/rng.hpp"
#include "cycleground/numcore/tensor.hpp"

namespace cycleground::synthdata {

using numcore::Index;
using numcore::Matrix;

/// How object mentions are ordered inside a caption.
enum class ObjectOrder : std::uint8_t {
  ByClass,  ///< ascending class index, so the order is a fixed prior
  Random,
};

/// How the relation word between the first two objects is chosen.
enum class RelationRule : std::uint8_t {
  Spatial,  ///< horizontal offset between the two boxes
  ByClass,  ///< a fixed function of the two classes
};

struct WorldSpec {
  int num_classes = 12;
  int class_embed_dim = 16;
  int scene_regions = 8;
  double feature_noise = 0.1;
  int min_objects = 2;
  int max_objects = 3;
  bool orthogonalize = true;
  std::vector<std::string> object_names;  ///< empty: "obj0".."objC-1" or the built-in list
  std::vector<std::string> attributes = {"red", "green", "blue", "yellow"};
  std::vector<std::string> relations = {"left_of", "right_of", "near"};
  ObjectOrder order = ObjectOrder::ByClass;
  RelationRule relation_rule = RelationRule::ByClass;
  double min_box_side = 0.1;
  double max_box_side = 0.3;
  double max_box_iou = 0.3;
  int max_box_tries = 1000;
  int train_size = 2000;
  int val_size = 200;
  int test_size = 200;
  std::uint64_t seed = 0;

  /// Throws ValidationError naming the offending field.
  void validate() const;
  /// Every class gets an object name, taken from object_names or generated.
  std::vector<std::string> resolved_object_names() const;
};

nlohmann::json to_json(const WorldSpec& spec);
/// Missing fields keep their defaults; unknown fields are rejected.
WorldSpec world_spec_from_json(const nlohmann::json& j);
WorldSpec load_world_spec(const std::filesystem::path& path);

std::string_view to_string(ObjectOrder order);
std::string_view to_string(RelationRule rule);

/// Fixed pieces shared by every scene: the vocabulary and one feature
/// embedding per object class.
struct World {
  WorldSpec spec;
  model::Vocabulary vocab;
  Matrix class_embeddings;        ///< [C x d_r], unit rows
  std::vector<int> attribute_of;  ///< attribute word id for each class
  std::vector<int> relation_ids;
  int article = 0;      ///< "a"
  int conjunction = 0;  ///< "and"

  int object_word(int cls) const { return vocab.word_of_class(cls); }
};

World gen_world(const WorldSpec& spec);

nlohmann::json to_json(const World& world);
World world_from_json(const nlohmann::json& j);
void save_world(const World& world, const std::filesystem::path& path);
World load_world(const std::filesystem::path& path);

}  // namespace cycleground::synthdata
