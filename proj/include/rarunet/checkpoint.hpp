#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rarunet/arch.hpp"

namespace rarunet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  int epoch = 0;
  double val_dice = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const CheckpointMeta&) const = default;
};

struct Checkpoint {
  Model<float> model;
  CheckpointMeta meta;
};

/// Little-endian layout: "RARU", u32 version, u32 length + canonical config
/// JSON, u32 parameter count, then per parameter u16 name length, name, u8
/// rank, u32 dims, float32 values. Parameters appear in name order.
std::string encode_checkpoint(const Model<float>& model, const CheckpointMeta& meta);

/// Validates magic, version, exact length, and that the stored parameters
/// match the wiring implied by the stored config.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Model<float>& model,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rarunet
