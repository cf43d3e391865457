#include "cycleground/synthdata/world.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"

namespace cycleground::synthdata {

namespace {

const std::vector<std::string> kDefaultObjects = {"cat",  "dog",  "ball", "cup",  "book", "car",
                                                  "tree", "bird", "chair", "lamp", "boat", "kite",
                                                  "vase", "shoe", "hat",  "fish"};

void require(bool ok, const std::string& field, const std::string& why) {
  if (!ok) throw ValidationError("world spec field '" + field + "': " + why);
}

ObjectOrder order_from_string(const std::string& s) {
  if (s == "by_class") return ObjectOrder::ByClass;
  if (s == "random") return ObjectOrder::Random;
  throw ValidationError("world spec field 'order': unknown value '" + s + "'");
}

RelationRule relation_from_string(const std::string& s) {
  if (s == "spatial") return RelationRule::Spatial;
  if (s == "by_class") return RelationRule::ByClass;
  throw ValidationError("world spec field 'relation_rule': unknown value '" + s + "'");
}

}  // namespace

std::string_view to_string(ObjectOrder order) {
  return order == ObjectOrder::ByClass ? "by_class" : "random";
}

std::string_view to_string(RelationRule rule) {
  return rule == RelationRule::Spatial ? "spatial" : "by_class";
}

void WorldSpec::validate() const {
  require(num_classes >= 2, "num_classes", "must be at least 2");
  require(class_embed_dim >= 1, "class_embed_dim", "must be positive");
  require(scene_regions >= 2, "scene_regions", "must be at least 2");
  require(std::isfinite(feature_noise) && feature_noise >= 0.0, "feature_noise", "must be finite and >= 0");
  require(min_objects >= 2, "min_objects", "must be at least 2");
  require(max_objects >= min_objects && max_objects <= 3, "max_objects", "must be in [min_objects, 3]");
  require(max_objects <= num_classes, "max_objects", "exceeds num_classes");
  require(max_objects <= scene_regions, "max_objects", "exceeds scene_regions");
  require(!attributes.empty(), "attributes", "must not be empty");
  require(relations.size() >= 1, "relations", "must not be empty");
  require(relation_rule != RelationRule::Spatial || relations.size() == 3, "relations",
          "the spatial rule needs exactly three words (left, right, near)");
  require(object_names.empty() || static_cast<int>(object_names.size()) == num_classes, "object_names",
          "must be empty or list one name per class");
  require(min_box_side > 0.0 && max_box_side >= min_box_side && max_box_side <= 1.0, "max_box_side",
          "need 0 < min_box_side <= max_box_side <= 1");
  require(max_box_iou >= 0.0 && max_box_iou < 1.0, "max_box_iou", "must be in [0, 1)");
  require(max_box_tries >= 1, "max_box_tries", "must be positive");
  require(train_size >= 1, "train_size", "must be at least 1");
  require(val_size >= 1, "val_size", "must be at least 1");
  require(test_size >= 1, "test_size", "must be at least 1");

  std::set<std::string> seen = {"<pad>", "<bos>", "<eos>", "a", "and"};
  const auto check_unique = [&](const std::vector<std::string>& words, const std::string& field) {
    for (const auto& w : words) {
      require(!w.empty() && w.find_first_of(" \t\n") == std::string::npos, field, "word '" + w + "' is not a single token");
      require(seen.insert(w).second, field, "duplicate word '" + w + "'");
    }
  };
  check_unique(resolved_object_names(), "object_names");
  check_unique(attributes, "attributes");
  check_unique(relations, "relations");
}

std::vector<std::string> WorldSpec::resolved_object_names() const {
  if (!object_names.empty()) return object_names;
  std::vector<std::string> names;
  for (int c = 0; c < num_classes; ++c) {
    const auto k = static_cast<std::size_t>(c);
    names.push_back(k < kDefaultObjects.size() && num_classes <= static_cast<int>(kDefaultObjects.size())
                        ? kDefaultObjects[k]
                        : "obj" + std::to_string(c));
  }
  return names;
}

nlohmann::json to_json(const WorldSpec& s) {
  return {{"num_classes", s.num_classes},
          {"class_embed_dim", s.class_embed_dim},
          {"scene_regions", s.scene_regions},
          {"feature_noise", s.feature_noise},
          {"min_objects", s.min_objects},
          {"max_objects", s.max_objects},
          {"orthogonalize", s.orthogonalize},
          {"object_names", s.object_names},
          {"attributes", s.attributes},
          {"relations", s.relations},
          {"order", to_string(s.order)},
          {"relation_rule", to_string(s.relation_rule)},
          {"min_box_side", s.min_box_side},
          {"max_box_side", s.max_box_side},
          {"max_box_iou", s.max_box_iou},
          {"max_box_tries", s.max_box_tries},
          {"train_size", s.train_size},
          {"val_size", s.val_size},
          {"test_size", s.test_size},
          {"seed", s.seed}};
}

WorldSpec world_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("world spec must be a JSON object");
  WorldSpec s;
  const nlohmann::json defaults = to_json(s);
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw ValidationError("world spec field '" + key + "': unknown field");
  }
  const auto get = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("world spec field '") + key + "': " + e.what());
    }
  };
  get("num_classes", s.num_classes);
  get("class_embed_dim", s.class_embed_dim);
  get("scene_regions", s.scene_regions);
  get("feature_noise", s.feature_noise);
  get("min_objects", s.min_objects);
  get("max_objects", s.max_objects);
  get("orthogonalize", s.orthogonalize);
  get("object_names", s.object_names);
  get("attributes", s.attributes);
  get("relations", s.relations);
  std::string order(to_string(s.order));
  std::string rule(to_string(s.relation_rule));
  get("order", order);
  get("relation_rule", rule);
  s.order = order_from_string(order);
  s.relation_rule = relation_from_string(rule);
  get("min_box_side", s.min_box_side);
  get("max_box_side", s.max_box_side);
  get("max_box_iou", s.max_box_iou);
  get("max_box_tries", s.max_box_tries);
  get("train_size", s.train_size);
  get("val_size", s.val_size);
  get("test_size", s.test_size);
  get("seed", s.seed);
  s.validate();
  return s;
}

WorldSpec load_world_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open world spec " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return world_spec_from_json(j);
}

World gen_world(const WorldSpec& spec) {
  spec.validate();
  if (spec.orthogonalize && spec.num_classes > spec.class_embed_dim) {
    throw UsageError("cannot orthogonalize " + std::to_string(spec.num_classes) + " class embeddings in " +
                     std::to_string(spec.class_embed_dim) + " dimensions");
  }
  World w;
  w.spec = spec;
  w.vocab = model::Vocabulary::with_specials();
  w.article = w.vocab.add("a");
  w.conjunction = w.vocab.add("and");
  for (const auto& r : spec.relations) w.relation_ids.push_back(w.vocab.add(r));
  std::vector<int> attribute_ids;
  for (const auto& a : spec.attributes) attribute_ids.push_back(w.vocab.add(a, -1, true));
  const auto names = spec.resolved_object_names();
  for (int c = 0; c < spec.num_classes; ++c) {
    w.vocab.add(names[static_cast<std::size_t>(c)], c, true);
    w.attribute_of.push_back(attribute_ids[static_cast<std::size_t>(c) % attribute_ids.size()]);
  }
  w.vocab.validate();

  numcore::Rng rng = numcore::Rng(spec.seed).split(0x776f726c64);  // "world"
  const Index C = spec.num_classes;
  const Index d = spec.class_embed_dim;
  w.class_embeddings = Matrix(C, d);
  for (Index c = 0; c < C; ++c) {
    for (Index k = 0; k < d; ++k) w.class_embeddings(c, k) = rng.normal();
    if (spec.orthogonalize) {
      for (Index p = 0; p < c; ++p) {
        const double proj = w.class_embeddings.row(c).dot(w.class_embeddings.row(p));
        w.class_embeddings.row(c) -= proj * w.class_embeddings.row(p);
      }
    }
    const double norm = w.class_embeddings.row(c).norm();
    if (!(norm > 1e-8)) throw GenerationError("degenerate class embedding while orthogonalizing");
    w.class_embeddings.row(c) /= norm;
  }
  return w;
}

nlohmann::json to_json(const World& w) {
  nlohmann::json emb = nlohmann::json::array();
  for (Index c = 0; c < w.class_embeddings.rows(); ++c) {
    std::vector<double> row(w.class_embeddings.row(c).begin(), w.class_embeddings.row(c).end());
    emb.push_back(row);
  }
  return {{"version", 1}, {"spec", to_json(w.spec)}, {"tokens", w.vocab.tokens}, {"class_embeddings", emb}};
}

World world_from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) {
      throw VersionError("unsupported world version " + j.at("version").dump());
    }
    World w = gen_world(world_spec_from_json(j.at("spec")));
    if (j.at("tokens").get<std::vector<std::string>>() != w.vocab.tokens) {
      throw ValidationError("world vocabulary does not match its spec");
    }
    const auto& emb = j.at("class_embeddings");
    if (static_cast<Index>(emb.size()) != w.class_embeddings.rows()) {
      throw ValidationError("world class_embeddings has the wrong row count");
    }
    for (Index c = 0; c < w.class_embeddings.rows(); ++c) {
      const auto row = emb.at(static_cast<std::size_t>(c)).get<std::vector<double>>();
      if (static_cast<Index>(row.size()) != w.class_embeddings.cols()) {
        throw ValidationError("world class_embeddings row " + std::to_string(c) + " has the wrong length");
      }
      for (Index k = 0; k < w.class_embeddings.cols(); ++k) w.class_embeddings(c, k) = row[static_cast<std::size_t>(k)];
    }
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("world file: ") + e.what());
  }
}

void save_world(const World& world, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_json(world).dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

World load_world(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return world_from_json(j);
}

}  // namespace cycleground::synthdata
