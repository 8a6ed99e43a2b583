#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "gaitbridge/trainer.hpp"

namespace gaitbridge {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Checkpoint bytes: magic, format version, payload length, payload, FNV-1a of the payload.
std::string serialize_checkpoint(const RunState& rs);

/// Throws VersionMismatch for another format version and ParseError for anything malformed.
RunState parse_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const RunState& rs, const std::filesystem::path& path);
RunState load_checkpoint(const std::filesystem::path& path);

}  // namespace gaitbridge
