// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "concepthash/model.hpp"

namespace concepthash {

/// Checkpoint file (little-endian):
///   "CHCK", u32 version = 1, u64 header_length,
///   UTF-8 JSON header {"model": ModelConfig, "seed": N, "extra": {...},
///                      "parameters": [{"name", "shape", "offset", "count", "trainable"}, ...]},
///   f32 parameter values in manifest order ("offset" counts floats from the data start).
struct Checkpoint {
  static constexpr char kMagic[4] = {'C', 'H', 'C', 'K'};
  static constexpr std::uint32_t kVersion = 1;
};

nlohmann::json model_config_to_json(const ModelConfig& cfg);
/// Throws ConfigError naming the offending field.
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::filesystem::path& path, const ConceptHashModel& model, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());

struct LoadedCheckpoint {
  std::unique_ptr<ConceptHashModel> model;
  std::uint64_t seed = 0;
  nlohmann::json extra;
};

/// Rebuilds the model from the header and overwrites every parameter.
/// Throws BadMagicError / TruncatedError / DataError on malformed files.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter to f32 in place, so an in-memory model matches
/// what a saved checkpoint reloads to.
void round_parameters_to_f32(ParameterStore& store);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace concepthash
