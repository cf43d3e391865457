#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cycleground::cli {

/// git blob id: sha1("blob <size>\0" + bytes).
std::string git_blob_hash(const std::filesystem::path& file);

/// Hash over the sorted (name, blob id) pairs of every regular file in dir,
/// in the style of a git tree.
std::string directory_hash(const std::filesystem::path& dir);

struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::vector<int> seeds;
  std::string dataset_hash;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;

  void write(const std::filesystem::path& dir) const;
};

}  // namespace cycleground::cli
