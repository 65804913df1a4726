#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rarunet/arch.hpp"
#include "rarunet/train.hpp"

namespace rarunet {

/// Contents of a config file:
///
///   {"arch":  {"base_channels": 32, "residual_encoders": true, ...},
///    "train": {"epochs": 50, "learning_rate": 1e-5, "adl": false, ...}}
///
/// Every key is optional; unknown keys are errors. alpha and beta are only
/// set when the file names them, otherwise the manifest supplies them.
struct RunConfig {
  ArchConfig arch;
  TrainConfig train;
  std::optional<double> alpha;
  std::optional<double> beta;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Canonical (sorted-key, compact) JSON of an architecture.
std::string arch_to_json(const ArchConfig& arch);
ArchConfig arch_from_json(std::string_view text);

std::string_view to_string(AttentionMode mode);
AttentionMode parse_attention_mode(std::string_view name);

}  // namespace rarunet
