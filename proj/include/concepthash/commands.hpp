// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "concepthash/run_config.hpp"

namespace concepthash {

// Library side of the `concepthash` subcommands. Each function is a pure
// function of its inputs and writes only under the given output locations.

struct DataSplits {
  Dataset train;
  std::optional<Dataset> test;
};

DataSplits load_data(const RunConfig& cfg);

/// One JSON object per epoch; disabled loss terms are absent.
nlohmann::json epoch_metrics_json(const EpochMetrics& m);

struct TrainOutcome {
  std::vector<EpochMetrics> epochs;
  /// Test-split mAP@full (test queries against the training codes); NaN without a test split.
  double initial_map = 0.0;
  double final_map = 0.0;
  /// Mean off-diagonal attention correlation on the training images.
  double initial_correlation = 0.0;
  double final_correlation = 0.0;
  double final_localization = 0.0;
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::string checkpoint_checksum;
};

/// Full schedule. Writes the checkpoint, <output_dir>/metrics.jsonl (one line
/// per epoch) and <output_dir>/summary.json. Final metrics are computed on
/// the f32-rounded parameters, i.e. exactly what the checkpoint reloads to.
TrainOutcome cmd_train(const RunConfig& cfg, std::ostream* progress = nullptr);

/// Encodes a dataset directory into a code-database file. Throws
/// DimensionError when `expected_bits` disagrees with the checkpoint.
std::size_t cmd_encode(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                       const std::filesystem::path& out, std::optional<std::size_t> expected_bits = std::nullopt);

struct EvalRequest {
  std::vector<std::filesystem::path> queries;    // one per bit length
  std::vector<std::filesystem::path> galleries;  // parallel to queries
  bool family = false;
  std::size_t r = 0;  // 0 = full gallery
  /// Optional attention metrics from a model on a dataset directory.
  std::filesystem::path checkpoint;
  std::filesystem::path attention_dataset;
  std::filesystem::path report;           // JSON output
  std::filesystem::path correlation_csv;  // written when attention metrics are requested
};

nlohmann::json cmd_eval(const EvalRequest& req);

/// Heatmap rendering: bilinear upsampling of a grid x grid map to `size`
/// pixels (pixel centers aligned), then min-max scaling to [0, 255].
Image upsample_attention(std::span<const double> map, std::size_t grid, std::size_t size);

/// Writes <out>/image_<i>_concept_<m>.png for every image and concept plus
/// <out>/correlation.csv. Returns the number of heatmaps written.
std::size_t cmd_attn(const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
                     const std::filesystem::path& out, std::size_t max_images = 0);

struct CentersRequest {
  std::filesystem::path checkpoint;  // preferred source when set
  std::filesystem::path embeddings;  // language mode without a checkpoint
  std::optional<CenterMode> mode;    // required without a checkpoint
  std::size_t bits = 16;
  std::size_t classes = 0;  // random / learnable without a checkpoint
  std::uint64_t seed = 0;
  std::filesystem::path out;
};

/// Writes centers.csv (o), centers_sign.csv (sign(o)) and center_stats.json
/// (pairwise cosine of o and Hamming distance of sign(o)). Returns the stats
/// document; its "warnings" array flags degenerate (all-zero) centers.
nlohmann::json cmd_centers(const CentersRequest& req);

/// Writes the synthetic train/test splits of a run config as dataset directories.
void cmd_synth(const RunConfig& cfg, const std::filesystem::path& out);

}  // namespace concepthash
