#include "cycleground/synthdata/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "cycleground/errors.hpp"

namespace cycleground::synthdata {

namespace {

constexpr int kFormatVersion = 1;
constexpr double kNearBand = 0.2;

std::vector<metrics::Box> place_boxes(const WorldSpec& spec, numcore::Rng& rng) {
  std::vector<metrics::Box> boxes;
  for (int n = 0; n < spec.scene_regions; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < spec.max_box_tries && !placed; ++attempt) {
      const double w = rng.uniform(spec.min_box_side, spec.max_box_side);
      const double h = rng.uniform(spec.min_box_side, spec.max_box_side);
      const double x = rng.uniform(0.0, 1.0 - w);
      const double y = rng.uniform(0.0, 1.0 - h);
      const metrics::Box b{x, y, x + w, y + h};
      placed = std::all_of(boxes.begin(), boxes.end(),
                           [&](const metrics::Box& o) { return metrics::iou(b, o) <= spec.max_box_iou; });
      if (placed) boxes.push_back(b);
    }
    if (!placed) {
      throw GenerationError("could not place box " + std::to_string(n) + " after " +
                            std::to_string(spec.max_box_tries) + " tries");
    }
  }
  return boxes;
}

double center_x(const metrics::Box& b) { return 0.5 * (b.x1 + b.x2); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string scene_line(const Scene& s, const model::Vocabulary& vocab) {
  std::string out = "{\"version\":" + std::to_string(kFormatVersion) + ",\"features\":[";
  for (Index n = 0; n < s.features.rows(); ++n) {
    out += n ? ",[" : "[";
    for (Index k = 0; k < s.features.cols(); ++k) {
      if (k) out += ',';
      out += format_double(s.features(n, k));
    }
    out += ']';
  }
  out += "],\"boxes\":[";
  for (std::size_t n = 0; n < s.boxes.size(); ++n) {
    const auto& b = s.boxes[n];
    out += (n ? ",[" : "[") + format_double(b.x1) + ',' + format_double(b.y1) + ',' + format_double(b.x2) + ',' +
           format_double(b.y2) + ']';
  }
  out += "],\"classes\":[";
  for (std::size_t n = 0; n < s.classes.size(); ++n) {
    if (n) out += ',';
    out += std::to_string(s.classes[n]);
  }
  out += "],\"captions\":[";
  for (std::size_t c = 0; c < s.captions.size(); ++c) {
    const Caption& cap = s.captions[c];
    nlohmann::json tokens = nlohmann::json::array();
    for (int t : cap.tokens) tokens.push_back(vocab.token(t));
    out += c ? ",{\"tokens\":" : "{\"tokens\":";
    out += tokens.dump() + ",\"alignments\":[";
    for (std::size_t a = 0; a < cap.alignments.size(); ++a) {
      if (a) out += ',';
      out += '[' + std::to_string(cap.alignments[a].position) + ',' + std::to_string(cap.alignments[a].region) + ']';
    }
    out += "]}";
  }
  out += "]}";
  return out;
}

Scene scene_from_json(const nlohmann::json& j, const model::Vocabulary& vocab) {
  if (!j.is_object()) throw ParseError("record is not a JSON object");
  if (!j.contains("version")) throw ParseError("record has no version");
  if (j.at("version") != kFormatVersion) {
    throw VersionError("unsupported scene format version " + j.at("version").dump());
  }
  Scene s;
  const auto feats = j.at("features").get<std::vector<std::vector<double>>>();
  if (feats.empty()) throw ParseError("scene has no regions");
  s.features = Matrix(static_cast<Index>(feats.size()), static_cast<Index>(feats.front().size()));
  for (std::size_t n = 0; n < feats.size(); ++n) {
    if (feats[n].size() != feats.front().size()) throw ParseError("ragged feature rows");
    for (std::size_t k = 0; k < feats[n].size(); ++k) s.features(static_cast<Index>(n), static_cast<Index>(k)) = feats[n][k];
  }
  for (const auto& b : j.at("boxes").get<std::vector<std::vector<double>>>()) {
    if (b.size() != 4) throw ParseError("box must have four coordinates");
    s.boxes.push_back({b[0], b[1], b[2], b[3]});
  }
  s.classes = j.at("classes").get<std::vector<int>>();
  for (const auto& c : j.at("captions")) {
    Caption cap;
    for (const auto& tok : c.at("tokens").get<std::vector<std::string>>()) cap.tokens.push_back(vocab.id(tok));
    for (const auto& a : c.at("alignments").get<std::vector<std::vector<int>>>()) {
      if (a.size() != 2) throw ParseError("alignment must be [position, region]");
      cap.alignments.push_back({a[0], a[1]});
    }
    s.captions.push_back(std::move(cap));
  }
  return s;
}

}  // namespace

bool operator==(const Scene& a, const Scene& b) {
  return a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
         a.features == b.features && a.boxes == b.boxes && a.classes == b.classes && a.captions == b.captions;
}

void Scene::validate(const model::Vocabulary& vocab) const {
  const auto n = static_cast<std::size_t>(features.rows());
  if (n == 0 || boxes.size() != n || classes.size() != n) {
    throw ValidationError("scene has " + std::to_string(n) + " feature rows, " + std::to_string(boxes.size()) +
                          " boxes and " + std::to_string(classes.size()) + " classes");
  }
  if (!numcore::all_finite(features)) throw ValidationError("scene features are not finite");
  for (const auto& b : boxes) {
    b.validate();
    if (b.x1 < 0.0 || b.y1 < 0.0 || b.x2 > 1.0 || b.y2 > 1.0) throw ValidationError("box " + b.str() + " leaves the unit square");
  }
  if (std::none_of(classes.begin(), classes.end(), [](int c) { return c != kBackground; })) {
    throw ValidationError("scene has no object region");
  }
  for (int c : classes) {
    if (c != kBackground && (c < 0 || c >= vocab.num_classes())) throw ValidationError("unknown class " + std::to_string(c));
  }
  if (captions.empty()) throw ValidationError("scene has no captions");
  for (const auto& cap : captions) {
    if (cap.tokens.size() < 2 || cap.tokens.front() != model::Vocabulary::kBos ||
        cap.tokens.back() != model::Vocabulary::kEos) {
      throw ValidationError("caption must run from <bos> to <eos>");
    }
    for (int t : cap.tokens) vocab.token(t);
    for (const auto& a : cap.alignments) {
      if (a.position <= 0 || a.position >= static_cast<int>(cap.tokens.size()) || a.region < 0 ||
          a.region >= static_cast<int>(n)) {
        throw ValidationError("alignment (" + std::to_string(a.position) + ", " + std::to_string(a.region) +
                              ") out of range");
      }
      const int word = cap.tokens[static_cast<std::size_t>(a.position)];
      const int expected = vocab.class_of_word[static_cast<std::size_t>(word)];
      if (expected < 0 || classes[static_cast<std::size_t>(a.region)] != expected) {
        throw ValidationError("alignment of '" + vocab.token(word) + "' points at region " + std::to_string(a.region) +
                              " of class " + std::to_string(classes[static_cast<std::size_t>(a.region)]));
      }
    }
  }
}

Scene gen_scene(const World& world, numcore::Rng& rng) {
  const WorldSpec& spec = world.spec;
  const int N = spec.scene_regions;
  const int k = spec.min_objects + static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_objects - spec.min_objects + 1)));

  std::vector<int> all_classes(static_cast<std::size_t>(spec.num_classes));
  std::iota(all_classes.begin(), all_classes.end(), 0);
  rng.shuffle(std::span<int>(all_classes));
  std::vector<int> chosen(all_classes.begin(), all_classes.begin() + k);

  Scene s;
  s.boxes = place_boxes(spec, rng);

  std::vector<int> regions(static_cast<std::size_t>(N));
  std::iota(regions.begin(), regions.end(), 0);
  rng.shuffle(std::span<int>(regions));

  s.classes.assign(static_cast<std::size_t>(N), kBackground);
  s.features = Matrix(N, spec.class_embed_dim);
  std::vector<int> region_of(static_cast<std::size_t>(k));
  for (int j = 0; j < k; ++j) {
    const auto jj = static_cast<std::size_t>(j);
    region_of[jj] = regions[jj];
    s.classes[static_cast<std::size_t>(regions[jj])] = chosen[jj];
  }
  for (int n = 0; n < N; ++n) {
    const int cls = s.classes[static_cast<std::size_t>(n)];
    for (Index d = 0; d < spec.class_embed_dim; ++d) s.features(n, d) = rng.normal();
    if (cls == kBackground) {
      s.features.row(n) /= s.features.row(n).norm();
    } else {
      s.features.row(n) = world.class_embeddings.row(cls) + spec.feature_noise * s.features.row(n);
    }
  }

  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  if (spec.order == ObjectOrder::ByClass) {
    std::sort(order.begin(), order.end(), [&](int a, int b) { return chosen[static_cast<std::size_t>(a)] < chosen[static_cast<std::size_t>(b)]; });
  } else {
    rng.shuffle(std::span<int>(order));
  }
  const auto cls_at = [&](int i) { return chosen[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]; };
  const auto region_at = [&](int i) { return region_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])]; };

  int relation = 0;
  if (spec.relation_rule == RelationRule::Spatial) {
    const double dx = center_x(s.boxes[static_cast<std::size_t>(region_at(1))]) -
                      center_x(s.boxes[static_cast<std::size_t>(region_at(0))]);
    relation = dx > kNearBand ? 0 : (dx < -kNearBand ? 1 : 2);
  } else {
    relation = (cls_at(0) + cls_at(1)) % static_cast<int>(world.relation_ids.size());
  }

  Caption cap;
  cap.tokens = {model::Vocabulary::kBos, world.article, world.attribute_of[static_cast<std::size_t>(cls_at(0))],
                world.object_word(cls_at(0)), world.relation_ids[static_cast<std::size_t>(relation)], world.article,
                world.object_word(cls_at(1))};
  cap.alignments = {{3, region_at(0)}, {6, region_at(1)}};
  if (k == 3) {
    cap.tokens.insert(cap.tokens.end(), {world.conjunction, world.article, world.object_word(cls_at(2))});
    cap.alignments.push_back({9, region_at(2)});
  }
  cap.tokens.push_back(model::Vocabulary::kEos);
  s.captions.push_back(std::move(cap));
  return s;
}

Dataset gen_dataset(const World& world) {
  const WorldSpec& spec = world.spec;
  const auto split = [&](std::uint64_t key, int size) {
    const numcore::Rng base = numcore::Rng(spec.seed).split(key);
    std::vector<Scene> scenes;
    scenes.reserve(static_cast<std::size_t>(size));
    for (int i = 0; i < size; ++i) {
      numcore::Rng rng = base.split(static_cast<std::uint64_t>(i));
      scenes.push_back(gen_scene(world, rng));
    }
    return scenes;
  };
  return {split(1, spec.train_size), split(2, spec.val_size), split(3, spec.test_size)};
}

void save_scenes(const std::vector<Scene>& scenes, const model::Vocabulary& vocab, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : scenes) out << scene_line(s, vocab) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<Scene> load_scenes(const std::filesystem::path& path, const model::Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Scene> scenes;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    try {
      Scene s = scene_from_json(nlohmann::json::parse(line), vocab);
      s.validate(vocab);
      scenes.push_back(std::move(s));
    } catch (const VersionError& e) {
      throw VersionError(where + e.what());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(where + e.what());
    } catch (const Error& e) {
      throw ParseError(where + e.what());
    }
  }
  if (!in.eof()) throw IoError("read failed for " + path.string());
  return scenes;
}

void save_dataset(const World& world, const Dataset& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_world(world, dir / "world.json");
  save_scenes(data.train, world.vocab, dir / "train.jsonl");
  save_scenes(data.val, world.vocab, dir / "val.jsonl");
  save_scenes(data.test, world.vocab, dir / "test.jsonl");
}

LoadedData load_dataset(const std::filesystem::path& dir) {
  LoadedData out{load_world(dir / "world.json"), {}};
  out.data.train = load_scenes(dir / "train.jsonl", out.world.vocab);
  out.data.val = load_scenes(dir / "val.jsonl", out.world.vocab);
  out.data.test = load_scenes(dir / "test.jsonl", out.world.vocab);
  return out;
}

}  // namespace cycleground::synthdata
