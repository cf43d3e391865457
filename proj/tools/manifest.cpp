#include "manifest.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "cycleground/errors.hpp"

namespace cycleground::cli {

namespace {

std::string sha1_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha1(), nullptr) != 1) {
    throw IoError("sha1 failed");
  }
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace

std::string git_blob_hash(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string blob = "blob " + std::to_string(content.size());
  blob.push_back('\0');
  return sha1_hex(blob + content);
}

std::string directory_hash(const std::filesystem::path& dir) {
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() != "manifest.json") {
      names.push_back(entry.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  std::string tree;
  for (const auto& n : names) tree += n + ' ' + git_blob_hash(dir / n) + '\n';
  return sha1_hex("tree " + std::to_string(tree.size()) + '\0' + tree);
}

void RunManifest::write(const std::filesystem::path& dir) const {
  const nlohmann::json j = {{"command", command},          {"config", config},
                            {"seeds", seeds},              {"dataset_hash", dataset_hash},
                            {"outputs", outputs},          {"wall_clock_seconds", wall_clock_seconds}};
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
  out << j.dump(2) << '\n';
}

}  // namespace cycleground::cli
