// SPDX-License-Identifier: Apache-2.0
#include "concepthash/objective.hpp"

#include <vector>

#include "concepthash/centers.hpp"
#include "concepthash/errors.hpp"

namespace concepthash {

std::string to_string(CsdMode mode) {
  return mode == CsdMode::per_sample ? "per_sample" : "batch_flattened";
}

CsdMode parse_csd_mode(const std::string& text) {
  if (text == "per_sample") return CsdMode::per_sample;
  if (text == "batch_flattened") return CsdMode::batch_flattened;
  throw ConfigError("loss.csd_mode: unknown mode \"" + text + "\" (per_sample, batch_flattened)");
}

void LossConfig::validate() const {
  if (!(tau > 0.0)) throw ConfigError("loss.tau: must be > 0");
  for (double w : {weight_clf, weight_quan, weight_csd, weight_cd})
    if (!(w >= 0.0)) throw ConfigError("loss.weights: must be >= 0");
}

Tensor loss_clf(const Tensor& codes, std::span<const int> labels, const Tensor& centers, double tau) {
  if (codes.rank() != 2 || centers.rank() != 2 || codes.dim(1) != centers.dim(1))
    throw DimensionError("loss_clf: codes " + shape_string(codes.shape()) + " vs centers " +
                         shape_string(centers.shape()));
  return cross_entropy(scale(cosine_matrix(codes, centers), 1.0 / tau), labels);
}

Tensor loss_quan(const Tensor& codes, std::span<const int> labels, const Tensor& centers, double tau) {
  return loss_clf(codes, labels, binarize_centers(centers), tau);
}

Tensor loss_csd(const Tensor& attention, CsdMode mode) {
  if (attention.rank() != 3) throw DimensionError("loss_csd: expected B x M x HW attention");
  const std::size_t batch = attention.dim(0), m = attention.dim(1), hw = attention.dim(2);
  if (m < 2) return Tensor::scalar(0.0);

  std::vector<double> off_diagonal(m * m, 1.0);
  for (std::size_t i = 0; i < m; ++i) off_diagonal[i * m + i] = 0.0;

  if (mode == CsdMode::batch_flattened) {
    // Row i gathers concept i's map from every sample: M x (B*HW).
    std::vector<std::size_t> idx;
    idx.reserve(attention.size());
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t j = 0; j < hw; ++j) idx.push_back((b * m + i) * hw + j);
    Tensor maps = gather(attention, idx, {m, batch * hw});
    for (auto& w : off_diagonal) w /= static_cast<double>(m * (m - 1));
    return weighted_sum(cosine_matrix(maps, maps), off_diagonal);
  }

  Tensor flat = reshape(attention, {batch * m, hw});
  std::vector<Tensor> sims;
  sims.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    Tensor maps = slice_rows(flat, b * m, (b + 1) * m);
    sims.push_back(cosine_matrix(maps, maps));
  }
  const double norm = 1.0 / static_cast<double>(batch * m * (m - 1));
  std::vector<double> weights;
  weights.reserve(batch * m * m);
  for (std::size_t b = 0; b < batch; ++b)
    for (double w : off_diagonal) weights.push_back(w * norm);
  return weighted_sum(concat_rows(sims), weights);
}

Tensor loss_cd(const Tensor& features, const Tensor& specificity, std::span<const int> labels, const Tensor& weights,
               double tau) {
  if (features.rank() != 3) throw DimensionError("loss_cd: expected B x M x D features");
  const std::size_t batch = features.dim(0), m = features.dim(1), d = features.dim(2);
  if (specificity.rows() != m || specificity.cols() != d)
    throw DimensionError("loss_cd: E is " + shape_string(specificity.shape()) + ", features " +
                         shape_string(features.shape()));
  if (weights.rank() != 2 || weights.dim(1) != d) throw DimensionError("loss_cd: W width mismatch");
  if (labels.size() != batch) throw DimensionError("loss_cd: label count mismatch");
  Tensor shifted = add_rows(reshape(features, {batch * m, d}), specificity);
  std::vector<int> per_concept;
  per_concept.reserve(batch * m);
  for (int y : labels) per_concept.insert(per_concept.end(), m, y);
  return cross_entropy(scale(cosine_matrix(shifted, weights), 1.0 / tau), per_concept);
}

Tensor total_loss(const LossParts& parts, const LossConfig& cfg) {
  Tensor total;
  auto accumulate = [&total](const Tensor& term, double weight) {
    if (!term.defined()) return;
    Tensor weighted = weight == 1.0 ? term : scale(term, weight);
    total = total.defined() ? add(total, weighted) : weighted;
  };
  accumulate(parts.clf, cfg.weight_clf);
  accumulate(parts.quan, cfg.weight_quan);
  accumulate(parts.csd, cfg.weight_csd);
  accumulate(parts.cd, cfg.weight_cd);
  return total.defined() ? total : Tensor::scalar(0.0);
}

}  // namespace concepthash
