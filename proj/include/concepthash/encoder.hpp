// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "concepthash/image.hpp"
#include "concepthash/parameters.hpp"
#include "concepthash/rng.hpp"
#include "concepthash/tensor.hpp"

namespace concepthash {

struct EncoderConfig {
  /// Bottleneck width used with a full-size (D = 768) backbone.
  static constexpr std::size_t kFullScaleAdapterDim = 384;

  std::size_t image_size = 32;
  std::size_t patch_size = 8;
  std::size_t channels = 3;
  std::size_t depth = 4;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t num_concepts = 4;
  std::size_t adapter_dim = 16;
  bool adapter_enabled = true;
  /// LayerNorm on the output concept tokens before the hashing head.
  bool final_norm = true;
  /// Pixels enter the patch embedding as (v - pixel_mean) / pixel_std.
  double pixel_mean = 0.5;
  double pixel_std = 0.25;
  /// Standard deviation of the truncated-normal weight initialization.
  double init_std = 0.02;

  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t seq_len() const { return num_patches() + num_concepts; }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t head_dim() const { return dim / heads; }

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;
};

struct AdapterParams {
  LayerNormParams norm;
  Tensor down;   // D x D_down
  Tensor up;     // D_down x D
  Tensor scale;  // learnable s, one element
};

struct BlockParams {
  LayerNormParams norm1;
  Tensor qkv_weight, qkv_bias;
  Tensor proj_weight, proj_bias;
  LayerNormParams norm2;
  Tensor fc1_weight, fc1_bias;
  Tensor fc2_weight, fc2_bias;
  AdapterParams adapter_attn;
  AdapterParams adapter_mlp;
};

struct AttentionOutput {
  Tensor output;  // (B*S) x D, after the output projection
  Tensor probs;   // B x heads x S x S
};

struct EncoderOutput {
  Tensor concept_features;  // B x M x D
  Tensor attention;         // B x M x HW, head-averaged, last layer
};

// Fused multi-head attention pieces over a packed qkv matrix of shape
// (B*S) x 3D laid out as [q | k | v]; head h owns columns h*dh..(h+1)*dh of
// each third.

// Sums over keys visit the first `ordered_keys` keys in position order and
// the rest in an order fixed by their values, so permuting the trailing
// (concept) keys permutes the output bit for bit. Default: all in order.

/// softmax_t(q_s . k_t / sqrt(dh)) per (batch, head); shape B x H x S x S.
Tensor attention_probs(const Tensor& qkv, std::size_t batch, std::size_t seq, std::size_t heads,
                       std::optional<std::size_t> ordered_keys = std::nullopt);
/// Probability-weighted sum of values, heads concatenated; shape (B*S) x D.
Tensor attention_apply(const Tensor& probs, const Tensor& qkv, std::size_t batch, std::size_t seq,
                       std::size_t heads, std::optional<std::size_t> ordered_keys = std::nullopt);
/// Head-averaged concept-query rows restricted to patch-key columns (no
/// renormalization); shape B x M x HW.
Tensor concept_attention(const Tensor& probs, std::size_t num_patches, std::size_t num_concepts);

/// Unfolds non-overlapping patches into rows of a (B*HW) x (C*p*p) matrix,
/// each row ordered channel, then patch row, then patch column. Values are
/// normalized with cfg.pixel_mean / cfg.pixel_std.
std::vector<double> extract_patches(std::span<const Image> images, const EncoderConfig& cfg);

/// Vision transformer whose input is the patch sequence followed by M
/// learnable concept tokens. Concept tokens carry no positional embedding, so
/// permuting them permutes the outputs identically.
class VitEncoder {
 public:
  VitEncoder(const EncoderConfig& cfg, ParameterStore& store, Rng& rng, const std::string& prefix = "encoder");

  const EncoderConfig& config() const { return cfg_; }
  const Tensor& concept_tokens() const { return concept_tokens_; }
  const BlockParams& block(std::size_t layer) const { return blocks_.at(layer); }

  Tensor patch_embed(std::span<const Image> images) const;
  Tensor build_input_sequence(const Tensor& patches, std::size_t batch) const;
  AttentionOutput msa_forward(std::size_t layer, const Tensor& z, std::size_t batch) const;
  Tensor adapter_forward(const AdapterParams& adapter, const Tensor& z) const;
  AttentionOutput block_forward(std::size_t layer, const Tensor& z, std::size_t batch) const;
  EncoderOutput encode(std::span<const Image> images) const;

 private:
  EncoderConfig cfg_;
  Tensor patch_weight_, patch_bias_, pos_embed_;
  Tensor concept_tokens_;
  std::vector<BlockParams> blocks_;
  LayerNormParams final_norm_;  // undefined when cfg.final_norm is false
};

}  // namespace concepthash
