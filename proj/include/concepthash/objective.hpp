// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>

#include "concepthash/tensor.hpp"

namespace concepthash {

/// How the spatial-diversity cosine treats the batch axis.
enum class CsdMode {
  /// cos per sample over HW, summed over ordered concept pairs, divided by B M (M-1).
  per_sample,
  /// One cosine per concept pair over the batch-flattened B*HW map, divided by M (M-1).
  batch_flattened,
};

std::string to_string(CsdMode mode);
CsdMode parse_csd_mode(const std::string& text);

struct LossConfig {
  double tau = 0.125;
  bool enable_quan = true;
  bool enable_csd = true;
  bool enable_cd = true;
  double weight_clf = 1.0;
  double weight_quan = 1.0;
  double weight_csd = 1.0;
  double weight_cd = 1.0;
  CsdMode csd_mode = CsdMode::per_sample;

  void validate() const;
};

/// Cosine-softmax classification of codes (B x K) against centers (C x K).
Tensor loss_clf(const Tensor& codes, std::span<const int> labels, const Tensor& centers, double tau);
/// loss_clf against sign(centers); the binarized centers are constants.
Tensor loss_quan(const Tensor& codes, std::span<const int> labels, const Tensor& centers, double tau);
/// Pairwise cosine between concept attention maps (B x M x HW); 0 when M = 1.
Tensor loss_csd(const Tensor& attention, CsdMode mode = CsdMode::per_sample);
/// Cosine-softmax classification of every shifted concept feature
/// Z_m + E_m (features B x M x D, E M x D) against weights W (C x D).
Tensor loss_cd(const Tensor& features, const Tensor& specificity, std::span<const int> labels,
               const Tensor& weights, double tau);

/// Individual terms; disabled terms stay undefined.
struct LossParts {
  Tensor clf, quan, csd, cd;
};

/// Weighted sum of the defined terms.
Tensor total_loss(const LossParts& parts, const LossConfig& cfg);

}  // namespace concepthash
