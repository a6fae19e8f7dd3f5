#pragma once

// Binary checkpoint container. Layout, all little-endian:
//   "INVE" | u32 version
//   u32 field count, then per field: u32 name length | name | u8 type (0 u32, 1 f32) | 4 bytes
//   u32 parameter count, then per parameter:
//     u32 name length | name | u32 rank | rank x u32 extents | f32 values
//     u32 moment count (0 or value count) | f32 first moments | f32 second moments | u64 step

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "inve/autodiff.hpp"

namespace inve {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointField {
  std::string name;
  std::variant<std::uint32_t, float> value;
};

struct CheckpointRecord {
  std::string name;
  ad::Shape shape;
  std::vector<float> values;
  std::vector<float> first;
  std::vector<float> second;
  std::uint64_t step = 0;
};

struct Checkpoint {
  std::vector<CheckpointField> fields;
  std::vector<CheckpointRecord> params;

  std::optional<std::uint32_t> u32(const std::string& name) const;
  std::optional<float> f32(const std::string& name) const;
  // Throws LoadError when the field is absent or of the wrong type.
  std::uint32_t require_u32(const std::string& name) const;
  const CheckpointRecord* find(const std::string& name) const;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// Throws LoadError on bad magic, unknown version or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

CheckpointRecord to_record(const ad::Parameter<float>& p);
// Copies values and optimizer state into p. Throws LoadError on shape mismatch.
void from_record(const CheckpointRecord& rec, ad::Parameter<float>& p);

}  // namespace inve
