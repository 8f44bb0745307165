// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "concepthash/parameters.hpp"
#include "concepthash/rng.hpp"
#include "concepthash/tensor.hpp"

namespace concepthash {

/// Class-name text embeddings as written by the exporter.
///
/// On-disk layout (little-endian): "CHEM", u32 version = 1, u32 C, u32 D_text,
/// C * D_text f32 row-major, then a UTF-8 JSON array of C class names that
/// runs to end of file.
struct TextEmbeddingFile {
  static constexpr char kMagic[4] = {'C', 'H', 'E', 'M'};
  static constexpr std::uint32_t kVersion = 1;

  std::size_t classes = 0;
  std::size_t dim = 0;
  std::vector<float> matrix;
  std::vector<std::string> class_names;

  Tensor as_tensor() const;
};

TextEmbeddingFile load_text_embeddings(const std::filesystem::path& path);
TextEmbeddingFile parse_text_embeddings(const std::vector<unsigned char>& bytes);
void write_text_embeddings(const std::filesystem::path& path, const TextEmbeddingFile& file);

enum class CenterMode { language, random_orthogonal, learnable };

std::string to_string(CenterMode mode);
CenterMode parse_center_mode(const std::string& text);

/// o = e W + bias, row-wise. e is C x D_text (frozen), W is D_text x K.
Tensor project_centers(const Tensor& embeddings, const Tensor& weight, const Tensor& bias);

/// Gram-Schmidt on the rows of a C x K matrix (requires C <= K). Returns an
/// empty vector when a row is numerically dependent on the previous ones.
std::vector<double> gram_schmidt_rows(std::vector<double> rows, std::size_t count, std::size_t width);

/// +-1 centers: Gaussian C x K, rows orthonormalized when C <= K, then sign.
Tensor random_orthogonal_centers(std::size_t classes, std::size_t bits, std::uint64_t seed);

/// Elementwise sign with sign(0) = +1, returned as a constant tensor.
Tensor binarize_centers(const Tensor& centers);

/// Hash class centers o (C x K) in one of three modes.
class ClassCenters {
 public:
  /// Language mode: requires the frozen embeddings.
  static ClassCenters language(const TextEmbeddingFile& embeddings, std::size_t bits, ParameterStore& store,
                               Rng& rng, const std::string& prefix = "centers");
  static ClassCenters random_orthogonal(std::size_t classes, std::size_t bits, std::uint64_t seed,
                                        ParameterStore& store, const std::string& prefix = "centers");
  static ClassCenters learnable(std::size_t classes, std::size_t bits, ParameterStore& store, Rng& rng,
                                const std::string& prefix = "centers");

  CenterMode mode() const { return mode_; }
  std::size_t classes() const { return classes_; }
  std::size_t bits() const { return bits_; }

  /// Current C x K centers. In language mode they are recomputed from the
  /// frozen embeddings through t on every call so that t receives gradients.
  Tensor centers() const;

  const Tensor& projection_weight() const { return weight_; }
  const Tensor& projection_bias() const { return bias_; }

 private:
  ClassCenters() = default;

  CenterMode mode_ = CenterMode::learnable;
  std::size_t classes_ = 0, bits_ = 0;
  Tensor embeddings_;  // language
  Tensor weight_, bias_;  // language
  Tensor table_;  // random (constant) or learnable
};

}  // namespace concepthash
