// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "concepthash/hash_head.hpp"
#include "concepthash/image.hpp"
#include "concepthash/tensor.hpp"

namespace concepthash {

struct CodeDatabase {
  std::size_t bits = 0;
  std::vector<HashCode> codes;
  std::vector<int> labels;
  /// Empty when no coarse labels are known.
  std::vector<int> family_labels;

  std::size_t size() const { return codes.size(); }
  bool has_family() const { return !family_labels.empty(); }
  /// Throws DimensionError when parallel arrays disagree or codes mix K.
  void validate() const;
};

/// Code database file (little-endian):
///   u32 header_length, UTF-8 JSON header {"K", "count", "labels", "family_labels"},
///   count * ceil(K/64) u64 code words,
///   count i32 labels (when "labels" is true),
///   count i32 family labels (when "family_labels" is true).
void write_code_database(const std::filesystem::path& path, const CodeDatabase& db);
CodeDatabase read_code_database(const std::filesystem::path& path);

/// popcount(a XOR b) over K bits.
std::size_t hamming_distance(const HashCode& a, const HashCode& b);

struct RankingResult {
  std::size_t query = 0;
  std::vector<std::size_t> order;      // database indices, best first
  std::vector<std::size_t> distances;  // non-decreasing
};

/// Stable ranking by (distance, database index). `exclude` drops one index.
RankingResult rank_database(const HashCode& query, const CodeDatabase& db,
                            std::optional<std::size_t> exclude = std::nullopt);

/// AP@R of one ranked relevance list, normalized by min(R, total_relevant);
/// 0 when nothing is relevant.
double average_precision(std::span<const bool> ranked_relevance, std::size_t r, std::size_t total_relevant);

/// Mean AP@R with relevance = same label. R = 0 means the full database.
/// When `queries` and `db` are the same object, each query's own entry is
/// excluded from its ranking.
double map_at_r(const CodeDatabase& queries, const CodeDatabase& db, std::size_t r = 0);

/// map_at_r with relevance = same family label.
double family_map(const CodeDatabase& queries, const CodeDatabase& db, std::size_t r = 0);

/// Worker count for query-parallel ranking: CONCEPTHASH_THREADS when set,
/// otherwise the hardware concurrency (at least 1).
std::size_t ranking_threads();

/// M x M matrix whose (i, j) entry is the batch mean of cos(A_i, A_j) for
/// attention of shape B x M x HW.
std::vector<double> attention_correlation(const Tensor& attention);
/// Mean of the off-diagonal entries of an M x M matrix.
double mean_off_diagonal(std::span<const double> matrix, std::size_t m);

/// Center pixel of patch `index` on a grid of square patches.
Landmark patch_center(std::size_t index, std::size_t image_size, std::size_t patch_size);

/// For every landmark, the distance to the closest concept prediction (the
/// center of that concept's argmax patch), averaged over landmarks, as a
/// percentage of the image side. attention is M x HW (one image).
double localization_error(std::span<const double> attention, std::size_t num_concepts,
                          std::span<const Landmark> landmarks, std::size_t image_size, std::size_t patch_size);

}  // namespace concepthash
