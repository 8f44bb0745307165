// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "concepthash/model.hpp"
#include "concepthash/objective.hpp"
#include "concepthash/synthetic.hpp"
#include "concepthash/trainer.hpp"

namespace concepthash {

struct RunPaths {
  std::string dataset;       // training directory; empty = synthetic
  std::string test_dataset;  // query directory; empty = synthetic test split (or none)
  std::string embeddings;    // CHEM file, required in language mode
  std::string checkpoint;    // empty = <output_dir>/model.chck
  std::string output_dir = "runs/default";
};

struct SyntheticSplits {
  SyntheticSpec spec;
  std::uint64_t train_seed = 1;
  std::uint64_t test_seed = 2;
  std::size_t test_images_per_class = 16;
};

/// Everything a run depends on. JSON layout (all keys optional, defaults shown
/// by `concepthash config`):
///   seed, K, M, classes, center_mode,
///   encoder.{image_size, patch_size, channels, depth, dim, heads, mlp_ratio, adapter_dim, adapter_enabled,
///           final_norm, pixel_mean, pixel_std, init_std},
///   loss.{tau, enable_quan, enable_csd, enable_cd, weight_*, csd_mode},
///   train.{epochs, batch_size, lr, momentum, weight_decay, warmup_epochs, eval_every,
///          augment.{enabled, flip_probability, min_scale, max_scale}},
///   synthetic.{num_classes, images_per_class, image_size, channels, glyph_size, jitter, noise,
///              background_amplitude, glyph_seed, classes_per_family, parts, train_seed, test_seed,
///              test_images_per_class},
///   paths.{dataset, test_dataset, embeddings, checkpoint, output_dir}
struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  /// Evaluate test mAP every N epochs (0 = only before and after training).
  std::size_t eval_every = 0;
  SyntheticSplits synthetic;
  RunPaths paths;

  bool uses_synthetic() const { return paths.dataset.empty(); }
  std::filesystem::path checkpoint_path() const;
  /// Field-level ConfigError on any inconsistency.
  void validate() const;
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Overlays `doc` on the defaults. Unknown keys and type errors raise
/// ConfigError naming the dotted field.
RunConfig run_config_from_json(const nlohmann::json& doc);
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the optional file, then overrides in order.
RunConfig resolve_run_config(const std::filesystem::path& config_path, const std::vector<std::string>& overrides);

}  // namespace concepthash
