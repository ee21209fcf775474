#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "polyth/model.hpp"

// Checkpoint layout (all integers u32 little-endian):
//   "PLNT" | version=1 | config length | config text (ModelConfig::to_text)
//   | parameter count | per parameter: name length, name, rank, extents..., f32 LE data
//   | CRC-32 of every byte after the magic and before the checksum.

namespace polyth {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, UnsupportedVersion, Truncated, ChecksumMismatch, Malformed };

  CheckpointError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

const char* to_string(CheckpointError::Kind kind);

struct Checkpoint {
  ModelConfig config;
  ParamStore params;
};

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params, const ModelConfig& config);
/// Validates everything before returning; nothing is returned on failure.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const ParamStore& params, const ModelConfig& config, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace polyth
