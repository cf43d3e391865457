#pragma once

#include <filesystem>
#include <iosfwd>

#include "cycleground/model/params.hpp"

namespace cycleground::model {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary container, little-endian throughout:
///   "CYGCKPT\0" | u32 version | u32 meta length | meta JSON (dims, localizer)
///   | u32 count | count x (u32 name length | name | u64 rows | u64 cols |
///   rows*cols float64 row-major)
/// Values round-trip bitwise.
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace cycleground::model
