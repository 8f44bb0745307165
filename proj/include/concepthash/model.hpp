// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "concepthash/centers.hpp"
#include "concepthash/encoder.hpp"
#include "concepthash/hash_head.hpp"
#include "concepthash/image.hpp"
#include "concepthash/objective.hpp"
#include "concepthash/parameters.hpp"

namespace concepthash {

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t bits = 16;     // K
  std::size_t classes = 8;   // C
  CenterMode center_mode = CenterMode::language;

  std::size_t num_concepts() const { return encoder.num_concepts; }
  void validate() const;
};

struct ForwardResult {
  Tensor features;   // B x M x D
  Tensor attention;  // B x M x HW
  Tensor codes;      // B x K, continuous
};

/// Encoder + hashing head + class centers + the concept-discrimination
/// classifier, all registered in one ParameterStore.
///
/// Initialization draws from independent streams derived from `seed`, so the
/// encoder init does not shift when the center mode changes.
class ConceptHashModel {
 public:
  /// `embeddings` is required in language mode and must have C rows.
  ConceptHashModel(const ModelConfig& cfg, std::uint64_t seed, const TextEmbeddingFile* embeddings = nullptr);

  ConceptHashModel(const ConceptHashModel&) = delete;
  ConceptHashModel& operator=(const ConceptHashModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& parameters() { return store_; }
  const ParameterStore& parameters() const { return store_; }
  const VitEncoder& encoder() const { return *encoder_; }
  const HashHead& head() const { return *head_; }
  const ClassCenters& centers() const { return *centers_; }
  const Tensor& cd_weights() const { return cd_weights_; }

  ForwardResult forward(std::span<const Image> images) const;
  LossParts losses(const ForwardResult& out, std::span<const int> labels, const LossConfig& cfg) const;

  /// Sign-binarized codes, computed without building a graph.
  std::vector<HashCode> encode(std::span<const Image> images, std::size_t batch_size = 64) const;
  /// Last-layer concept attention (B x M x HW values), no graph.
  std::vector<double> attention_maps(std::span<const Image> images, std::size_t batch_size = 64) const;

 private:
  ModelConfig cfg_;
  ParameterStore store_;
  std::unique_ptr<VitEncoder> encoder_;
  std::unique_ptr<HashHead> head_;
  std::unique_ptr<ClassCenters> centers_;
  Tensor cd_weights_;  // C x D
};

}  // namespace concepthash
