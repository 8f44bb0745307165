// SPDX-License-Identifier: Apache-2.0
#include "concepthash/model.hpp"

#include <algorithm>

#include "concepthash/errors.hpp"

namespace concepthash {

namespace {
enum Stream : std::uint64_t { kEncoderStream = 1, kHeadStream = 2, kCenterStream = 3, kCdStream = 4 };
}

void ModelConfig::validate() const {
  encoder.validate();
  if (bits == 0) throw ConfigError("K: must be positive");
  if (bits % encoder.num_concepts != 0)
    throw ConfigError("K: " + std::to_string(bits) + " is not divisible by M = " +
                      std::to_string(encoder.num_concepts));
  if (classes < 2) throw ConfigError("classes: need at least 2");
}

ConceptHashModel::ConceptHashModel(const ModelConfig& cfg, std::uint64_t seed, const TextEmbeddingFile* embeddings)
    : cfg_(cfg) {
  cfg_.validate();
  Rng enc_rng(derive_seed(seed, kEncoderStream));
  encoder_ = std::make_unique<VitEncoder>(cfg_.encoder, store_, enc_rng);
  Rng head_rng(derive_seed(seed, kHeadStream));
  head_ = std::make_unique<HashHead>(cfg_.encoder.dim, cfg_.bits, cfg_.encoder.num_concepts, store_, head_rng);

  Rng center_rng(derive_seed(seed, kCenterStream));
  switch (cfg_.center_mode) {
    case CenterMode::language:
      if (embeddings == nullptr) throw ConfigError("center_mode=language requires a text embedding file");
      if (embeddings->classes != cfg_.classes)
        throw DataError("text embeddings have " + std::to_string(embeddings->classes) + " classes, model has " +
                        std::to_string(cfg_.classes));
      centers_ = std::make_unique<ClassCenters>(ClassCenters::language(*embeddings, cfg_.bits, store_, center_rng));
      break;
    case CenterMode::random_orthogonal:
      centers_ = std::make_unique<ClassCenters>(
          ClassCenters::random_orthogonal(cfg_.classes, cfg_.bits, derive_seed(seed, kCenterStream), store_));
      break;
    case CenterMode::learnable:
      centers_ = std::make_unique<ClassCenters>(ClassCenters::learnable(cfg_.classes, cfg_.bits, store_, center_rng));
      break;
  }

  Rng cd_rng(derive_seed(seed, kCdStream));
  const std::size_t d = cfg_.encoder.dim;
  cd_weights_ = store_.add("loss.cd_weights", {cfg_.classes, d}, truncated_normal_vector(cd_rng, cfg_.classes * d, 0.02));
}

ForwardResult ConceptHashModel::forward(std::span<const Image> images) const {
  EncoderOutput enc = encoder_->encode(images);
  ForwardResult r;
  r.codes = head_->full_code(enc.concept_features);
  r.features = std::move(enc.concept_features);
  r.attention = std::move(enc.attention);
  return r;
}

LossParts ConceptHashModel::losses(const ForwardResult& out, std::span<const int> labels,
                                   const LossConfig& cfg) const {
  for (int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= cfg_.classes)
      throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(cfg_.classes) + ")");
  LossParts parts;
  const Tensor centers = centers_->centers();
  parts.clf = loss_clf(out.codes, labels, centers, cfg.tau);
  if (cfg.enable_quan) parts.quan = loss_quan(out.codes, labels, centers, cfg.tau);
  if (cfg.enable_csd) parts.csd = loss_csd(out.attention, cfg.csd_mode);
  if (cfg.enable_cd) parts.cd = loss_cd(out.features, head_->specificity(), labels, cd_weights_, cfg.tau);
  return parts;
}

std::vector<HashCode> ConceptHashModel::encode(std::span<const Image> images, std::size_t batch_size) const {
  NoGradGuard guard;
  std::vector<HashCode> codes;
  codes.reserve(images.size());
  const std::size_t k = cfg_.bits;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, images.size() - start);
    EncoderOutput enc = encoder_->encode(images.subspan(start, n));
    Tensor c = head_->full_code(enc.concept_features);
    auto v = c.values();
    for (std::size_t i = 0; i < n; ++i) codes.push_back(binarize(v.subspan(i * k, k)));
  }
  return codes;
}

std::vector<double> ConceptHashModel::attention_maps(std::span<const Image> images, std::size_t batch_size) const {
  NoGradGuard guard;
  std::vector<double> out;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, images.size() - start);
    EncoderOutput enc = encoder_->encode(images.subspan(start, n));
    auto v = enc.attention.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

}  // namespace concepthash
