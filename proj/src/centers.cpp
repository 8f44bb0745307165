// SPDX-License-Identifier: Apache-2.0
#include "concepthash/centers.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "concepthash/binary_io.hpp"
#include "concepthash/errors.hpp"

namespace concepthash {

Tensor TextEmbeddingFile::as_tensor() const {
  return Tensor::from({classes, dim}, std::vector<double>(matrix.begin(), matrix.end()));
}

TextEmbeddingFile parse_text_embeddings(const std::vector<unsigned char>& bytes) {
  ByteReader in(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), TextEmbeddingFile::kMagic, 4) != 0)
    throw BadMagicError("text embeddings: bad magic (expected \"CHEM\")");
  in.skip(4);
  if (in.remaining() < 12) throw TruncatedError("text embeddings: truncated header");
  const auto version = in.u32();
  if (version != TextEmbeddingFile::kVersion)
    throw DataError("text embeddings: unsupported version " + std::to_string(version));
  TextEmbeddingFile file;
  file.classes = in.u32();
  file.dim = in.u32();
  if (file.classes == 0) throw DataError("text embeddings: empty class set (C = 0)");
  if (file.dim == 0) throw DataError("text embeddings: zero embedding width");
  const std::size_t count = file.classes * file.dim;
  if (in.remaining() < count * 4)
    throw TruncatedError("text embeddings: payload holds " + std::to_string(in.remaining() / 4) + " floats, header promises " +
                         std::to_string(count));
  file.matrix.resize(count);
  for (auto& v : file.matrix) {
    v = in.f32();
    if (std::isnan(v)) throw DataError("text embeddings: NaN entry");
  }
  const std::string names_text(reinterpret_cast<const char*>(bytes.data() + in.position()), in.remaining());
  nlohmann::json names;
  try {
    names = nlohmann::json::parse(names_text);
  } catch (const nlohmann::json::exception& e) {
    throw TruncatedError(std::string("text embeddings: class-name list unreadable: ") + e.what());
  }
  if (!names.is_array()) throw DataError("text embeddings: class names are not a JSON array");
  if (names.size() != file.classes)
    throw CountMismatchError("text embeddings: " + std::to_string(names.size()) + " class names for C = " +
                             std::to_string(file.classes));
  for (const auto& n : names) file.class_names.push_back(n.get<std::string>());
  return file;
}

TextEmbeddingFile load_text_embeddings(const std::filesystem::path& path) {
  return parse_text_embeddings(read_file_bytes(path));
}

void write_text_embeddings(const std::filesystem::path& path, const TextEmbeddingFile& file) {
  if (file.matrix.size() != file.classes * file.dim || file.class_names.size() != file.classes)
    throw ContractError("write_text_embeddings: inconsistent structure");
  ByteWriter out;
  out.raw(TextEmbeddingFile::kMagic, 4);
  out.u32(TextEmbeddingFile::kVersion);
  out.u32(static_cast<std::uint32_t>(file.classes));
  out.u32(static_cast<std::uint32_t>(file.dim));
  for (float v : file.matrix) out.f32(v);
  const std::string names = nlohmann::json(file.class_names).dump();
  out.raw(names.data(), names.size());
  write_file_bytes(path, out.bytes());
}

std::string to_string(CenterMode mode) {
  switch (mode) {
    case CenterMode::language: return "language";
    case CenterMode::random_orthogonal: return "random";
    case CenterMode::learnable: return "learnable";
  }
  return "?";
}

CenterMode parse_center_mode(const std::string& text) {
  if (text == "language") return CenterMode::language;
  if (text == "random" || text == "random_orthogonal") return CenterMode::random_orthogonal;
  if (text == "learnable") return CenterMode::learnable;
  throw ConfigError("center_mode: unknown mode \"" + text + "\" (language, random, learnable)");
}

Tensor project_centers(const Tensor& embeddings, const Tensor& weight, const Tensor& bias) {
  return linear(embeddings, weight, bias);
}

std::vector<double> gram_schmidt_rows(std::vector<double> rows, std::size_t count, std::size_t width) {
  if (count > width) return {};
  for (std::size_t i = 0; i < count; ++i) {
    double* ri = rows.data() + i * width;
    // Modified Gram-Schmidt, two passes for stability.
    for (int pass = 0; pass < 2; ++pass)
      for (std::size_t j = 0; j < i; ++j) {
        const double* rj = rows.data() + j * width;
        double dot = 0.0;
        for (std::size_t k = 0; k < width; ++k) dot += ri[k] * rj[k];
        for (std::size_t k = 0; k < width; ++k) ri[k] -= dot * rj[k];
      }
    double norm = 0.0;
    for (std::size_t k = 0; k < width; ++k) norm += ri[k] * ri[k];
    norm = std::sqrt(norm);
    if (norm < 1e-10) return {};
    for (std::size_t k = 0; k < width; ++k) ri[k] /= norm;
  }
  return rows;
}

Tensor random_orthogonal_centers(std::size_t classes, std::size_t bits, std::uint64_t seed) {
  if (classes == 0 || bits == 0) throw ConfigError("random centers: C and K must be positive");
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> gaussian(classes * bits);
  for (auto& v : gaussian) v = normal(rng);
  std::vector<double> basis = gram_schmidt_rows(gaussian, classes, bits);
  const std::vector<double>& source = basis.empty() ? gaussian : basis;
  std::vector<double> out(source.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = source[i] >= 0.0 ? 1.0 : -1.0;
  return Tensor::from({classes, bits}, std::move(out));
}

Tensor binarize_centers(const Tensor& centers) {
  std::vector<double> out(centers.size());
  auto v = centers.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] >= 0.0 ? 1.0 : -1.0;
  return Tensor::from(centers.shape(), std::move(out));
}

ClassCenters ClassCenters::language(const TextEmbeddingFile& embeddings, std::size_t bits, ParameterStore& store,
                                    Rng& rng, const std::string& prefix) {
  ClassCenters c;
  c.mode_ = CenterMode::language;
  c.classes_ = embeddings.classes;
  c.bits_ = bits;
  const std::size_t d = embeddings.dim;
  c.embeddings_ = store.add(prefix + ".text_embeddings", {c.classes_, d},
                            std::vector<double>(embeddings.matrix.begin(), embeddings.matrix.end()),
                            /*trainable=*/false);
  c.weight_ = store.add(prefix + ".projection.weight", {d, bits}, truncated_normal_vector(rng, d * bits, 0.02));
  c.bias_ = store.add(prefix + ".projection.bias", {bits}, std::vector<double>(bits, 0.0));
  return c;
}

ClassCenters ClassCenters::random_orthogonal(std::size_t classes, std::size_t bits, std::uint64_t seed,
                                             ParameterStore& store, const std::string& prefix) {
  ClassCenters c;
  c.mode_ = CenterMode::random_orthogonal;
  c.classes_ = classes;
  c.bits_ = bits;
  Tensor fixed = random_orthogonal_centers(classes, bits, seed);
  c.table_ = store.add(prefix + ".fixed", {classes, bits}, std::vector<double>(fixed.values().begin(), fixed.values().end()),
                       /*trainable=*/false);
  return c;
}

ClassCenters ClassCenters::learnable(std::size_t classes, std::size_t bits, ParameterStore& store, Rng& rng,
                                     const std::string& prefix) {
  ClassCenters c;
  c.mode_ = CenterMode::learnable;
  c.classes_ = classes;
  c.bits_ = bits;
  c.table_ = store.add(prefix + ".table", {classes, bits}, truncated_normal_vector(rng, classes * bits, 0.02));
  return c;
}

Tensor ClassCenters::centers() const {
  if (mode_ == CenterMode::language) return project_centers(embeddings_, weight_, bias_);
  return table_;
}

}  // namespace concepthash
