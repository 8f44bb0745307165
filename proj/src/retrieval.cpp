// SPDX-License-Identifier: Apache-2.0
#include "concepthash/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "concepthash/binary_io.hpp"
#include "concepthash/errors.hpp"

namespace concepthash {

void CodeDatabase::validate() const {
  if (labels.size() != codes.size()) throw DimensionError("code database: label count differs from code count");
  if (!family_labels.empty() && family_labels.size() != codes.size())
    throw DimensionError("code database: family label count differs from code count");
  for (const auto& c : codes)
    if (c.bits() != bits) throw DimensionError("code database: mixed code lengths");
}

void write_code_database(const std::filesystem::path& path, const CodeDatabase& db) {
  db.validate();
  nlohmann::json header = {{"K", db.bits},
                           {"count", db.size()},
                           {"labels", true},
                           {"family_labels", db.has_family()}};
  const std::string text = header.dump();
  ByteWriter out;
  out.u32(static_cast<std::uint32_t>(text.size()));
  out.raw(text.data(), text.size());
  for (const auto& c : db.codes)
    for (auto w : c.words()) out.u64(w);
  for (int y : db.labels) out.i32(y);
  for (int f : db.family_labels) out.i32(f);
  write_file_bytes(path, out.bytes());
}

CodeDatabase read_code_database(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader in(bytes);
  const auto header_len = in.u32();
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in.string(header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("code database " + path.string() + ": bad header: " + e.what());
  }
  CodeDatabase db;
  db.bits = header.at("K").get<std::size_t>();
  const auto count = header.at("count").get<std::size_t>();
  const bool has_labels = header.value("labels", false);
  const bool has_family = header.value("family_labels", false);
  const std::size_t words = HashCode::word_count(db.bits);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<std::uint64_t> w(words);
    for (auto& x : w) x = in.u64();
    db.codes.emplace_back(db.bits, std::move(w));
  }
  db.labels.assign(count, -1);
  if (has_labels)
    for (auto& y : db.labels) y = in.i32();
  if (has_family) {
    db.family_labels.resize(count);
    for (auto& f : db.family_labels) f = in.i32();
  }
  if (in.remaining() != 0) throw CountMismatchError("code database " + path.string() + ": trailing bytes");
  return db;
}

std::size_t hamming_distance(const HashCode& a, const HashCode& b) {
  if (a.bits() != b.bits())
    throw DimensionError("hamming_distance: " + std::to_string(a.bits()) + " vs " + std::to_string(b.bits()) + " bits");
  auto wa = a.words(), wb = b.words();
  std::size_t d = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) d += static_cast<std::size_t>(std::popcount(wa[i] ^ wb[i]));
  return d;
}

RankingResult rank_database(const HashCode& query, const CodeDatabase& db, std::optional<std::size_t> exclude) {
  RankingResult r;
  const std::size_t n = db.size();
  // Counting sort on distance keeps equal-distance items in index order.
  std::vector<std::size_t> dist(n);
  for (std::size_t i = 0; i < n; ++i) dist[i] = hamming_distance(query, db.codes[i]);
  std::vector<std::size_t> bucket(query.bits() + 2, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (i != exclude) ++bucket[dist[i] + 1];
  std::partial_sum(bucket.begin(), bucket.end(), bucket.begin());
  const std::size_t kept = bucket.back();
  r.order.resize(kept);
  r.distances.resize(kept);
  for (std::size_t i = 0; i < n; ++i) {
    if (i == exclude) continue;
    const std::size_t slot = bucket[dist[i]]++;
    r.order[slot] = i;
    r.distances[slot] = dist[i];
  }
  return r;
}

double average_precision(std::span<const bool> ranked_relevance, std::size_t r, std::size_t total_relevant) {
  const std::size_t denom = std::min(r, total_relevant);
  if (denom == 0) return 0.0;
  const std::size_t limit = std::min(r, ranked_relevance.size());
  double acc = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < limit; ++k) {
    if (!ranked_relevance[k]) continue;
    ++hits;
    acc += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return acc / static_cast<double>(denom);
}

std::size_t ranking_threads() {
  if (const char* env = std::getenv("CONCEPTHASH_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

double map_by(const CodeDatabase& queries, const CodeDatabase& db, std::size_t r,
              std::span<const int> query_keys, std::span<const int> db_keys) {
  if (db.size() == 0) throw DataError("map_at_r: empty database");
  if (queries.size() == 0) throw DataError("map_at_r: no queries");
  if (queries.bits != db.bits) throw DimensionError("map_at_r: query and database code lengths differ");
  const bool same = &queries == &db;
  const std::size_t full = same ? db.size() - 1 : db.size();
  const std::size_t rr = r == 0 ? full : std::min(r, full);
  if (r > db.size()) throw DimensionError("map_at_r: R exceeds database size");

  std::vector<double> ap(queries.size(), 0.0);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t q = begin; q < end; ++q) {
      auto ranking = rank_database(queries.codes[q], db, same ? std::optional<std::size_t>(q) : std::nullopt);
      std::unique_ptr<bool[]> rel(new bool[ranking.order.size()]);
      std::size_t total = 0;
      for (std::size_t k = 0; k < ranking.order.size(); ++k) {
        rel[k] = db_keys[ranking.order[k]] == query_keys[q];
        total += rel[k];
      }
      ap[q] = average_precision(std::span<const bool>(rel.get(), ranking.order.size()), rr, total);
    }
  };
  const std::size_t threads = std::min(ranking_threads(), queries.size());
  if (threads <= 1) {
    work(0, queries.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (queries.size() + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(queries.size(), b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  // Fixed-order reduction: identical for any thread count.
  double total = 0.0;
  for (double v : ap) total += v;
  return total / static_cast<double>(queries.size());
}

}  // namespace

double map_at_r(const CodeDatabase& queries, const CodeDatabase& db, std::size_t r) {
  queries.validate();
  db.validate();
  return map_by(queries, db, r, queries.labels, db.labels);
}

double family_map(const CodeDatabase& queries, const CodeDatabase& db, std::size_t r) {
  if (!queries.has_family() || !db.has_family()) throw DataError("family_map: family labels missing");
  queries.validate();
  db.validate();
  return map_by(queries, db, r, queries.family_labels, db.family_labels);
}

std::vector<double> attention_correlation(const Tensor& attention) {
  if (attention.rank() != 3) throw DimensionError("attention_correlation: expected B x M x HW");
  const std::size_t batch = attention.dim(0), m = attention.dim(1), hw = attention.dim(2);
  auto v = attention.values();
  std::vector<double> out(m * m, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* base = v.data() + b * m * hw;
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < hw; ++k) s += base[i * hw + k] * base[i * hw + k];
      norms[i] = std::max(std::sqrt(s), kCosineEps);
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < hw; ++k) dot += base[i * hw + k] * base[j * hw + k];
        out[i * m + j] += dot / (norms[i] * norms[j]);
      }
  }
  for (auto& x : out) x /= static_cast<double>(batch);
  return out;
}

double mean_off_diagonal(std::span<const double> matrix, std::size_t m) {
  if (m < 2) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) s += matrix[i * m + j];
  return s / static_cast<double>(m * (m - 1));
}

Landmark patch_center(std::size_t index, std::size_t image_size, std::size_t patch_size) {
  const std::size_t grid = image_size / patch_size;
  const double half = (static_cast<double>(patch_size) - 1.0) / 2.0;
  return {static_cast<double>((index % grid) * patch_size) + half,
          static_cast<double>((index / grid) * patch_size) + half};
}

double localization_error(std::span<const double> attention, std::size_t num_concepts,
                          std::span<const Landmark> landmarks, std::size_t image_size, std::size_t patch_size) {
  if (landmarks.empty()) throw DataError("localization_error: no landmarks");
  if (num_concepts == 0 || attention.size() % num_concepts != 0)
    throw DimensionError("localization_error: attention size not a multiple of M");
  const std::size_t hw = attention.size() / num_concepts;
  const std::size_t grid = image_size / patch_size;
  if (grid * grid != hw) throw DimensionError("localization_error: attention width does not match patch grid");
  std::vector<Landmark> predicted;
  for (std::size_t i = 0; i < num_concepts; ++i) {
    auto row = attention.subspan(i * hw, hw);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    predicted.push_back(patch_center(best, image_size, patch_size));
  }
  double total = 0.0;
  for (const Landmark& l : landmarks) {
    double best = std::numeric_limits<double>::infinity();
    for (const Landmark& p : predicted) best = std::min(best, std::hypot(p.x - l.x, p.y - l.y));
    total += best;
  }
  return 100.0 * total / static_cast<double>(landmarks.size()) / static_cast<double>(image_size);
}

}  // namespace concepthash
