#include "cycleground/model/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <nlohmann/json.hpp>
#include <ostream>

#include "cycleground/errors.hpp"

namespace cycleground::model {

namespace {

constexpr std::array<char, 8> kMagic = {'C', 'Y', 'G', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), sizeof(T));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(T))) {
    throw ParseError(std::string("checkpoint truncated while reading ") + what);
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

std::string get_string(std::istream& in, std::uint32_t length, const char* what) {
  if (length > (1u << 24)) throw ParseError(std::string("checkpoint: implausible ") + what + " length");
  std::string s(length, '\0');
  in.read(s.data(), length);
  if (in.gcount() != static_cast<std::streamsize>(length)) {
    throw ParseError(std::string("checkpoint truncated while reading ") + what);
  }
  return s;
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kCheckpointVersion);
  const nlohmann::json meta = {
      {"dims",
       {{"vocab", params.dims.vocab},
        {"embed", params.dims.embed},
        {"hidden", params.dims.hidden},
        {"feature", params.dims.feature},
        {"classes", params.dims.classes},
        {"location", params.dims.location}}},
      {"localizer", std::string(to_string(params.localizer))},
  };
  const std::string meta_text = meta.dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(meta_text.size()));
  out.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.values.size()));
  for (const auto& [name, m] : params.values) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (numcore::Index i = 0; i < m.size(); ++i) put<double>(out, m.data()[i]);
  }
  if (!out) throw IoError("failed writing checkpoint");
}

ModelParams read_checkpoint(std::istream& in) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() != static_cast<std::streamsize>(magic.size()) || magic != kMagic) {
    throw ParseError("not a checkpoint file (bad magic)");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != kCheckpointVersion) {
    throw VersionError("unsupported checkpoint version " + std::to_string(version) +
                       " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const auto meta_len = get<std::uint32_t>(in, "metadata length");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(get_string(in, meta_len, "metadata"));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  ModelParams p;
  try {
    const auto& d = meta.at("dims");
    p.dims = {d.at("vocab").get<int>(),   d.at("embed").get<int>(),   d.at("hidden").get<int>(),
              d.at("feature").get<int>(), d.at("classes").get<int>(), d.at("location").get<int>()};
    p.localizer = localizer_variant_from_string(meta.at("localizer").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint metadata: ") + e.what());
  }
  p.dims.validate();
  const auto count = get<std::uint32_t>(in, "parameter count");
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = get_string(in, get<std::uint32_t>(in, "name length"), "name");
    const auto rows = get<std::uint64_t>(in, "rows");
    const auto cols = get<std::uint64_t>(in, "cols");
    if (rows == 0 || cols == 0 || rows * cols > (1ull << 28)) {
      throw ParseError("checkpoint: implausible shape for '" + name + "'");
    }
    numcore::Matrix m(static_cast<numcore::Index>(rows), static_cast<numcore::Index>(cols));
    for (numcore::Index i = 0; i < m.size(); ++i) m.data()[i] = get<double>(in, "values");
    p.values.add(std::move(name), std::move(m));
  }
  // Shape check against a freshly initialized layout.
  const ModelParams layout = init_params(p.dims, p.localizer, 0);
  if (layout.values.size() != p.values.size()) {
    throw ParseError("checkpoint: parameter count does not match its dims");
  }
  for (const auto& [name, m] : layout.values) {
    if (!p.values.contains(name)) throw ParseError("checkpoint: missing parameter '" + name + "'");
    const auto& got = p.values.at(name);
    if (got.rows() != m.rows() || got.cols() != m.cols()) {
      throw ParseError("checkpoint: parameter '" + name + "' has wrong shape");
    }
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_checkpoint(out, params);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

}  // namespace cycleground::model
