// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "concepthash/augment.hpp"
#include "concepthash/dataset.hpp"
#include "concepthash/model.hpp"
#include "concepthash/objective.hpp"
#include "concepthash/retrieval.hpp"

namespace concepthash {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::size_t warmup_epochs = 10;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

/// Linear 0 -> lr over the warmup, then half-cosine down to 0 at `epochs`.
/// `epoch` may be fractional (per-step scheduling).
double cosine_lr_with_warmup(double epoch, const TrainConfig& cfg);

/// v <- momentum * v + (g + wd * p);  p <- p - lr * v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
                       double momentum, double weight_decay);

/// Momentum buffers for every trainable parameter of a store (zero-initialized).
class SgdMomentum {
 public:
  SgdMomentum(ParameterStore& store, double momentum, double weight_decay);
  void step(double lr);

 private:
  ParameterStore& store_;
  double momentum_, weight_decay_;
  std::vector<std::vector<double>> velocity_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;  // rate at the last step of the epoch
  double loss = 0.0;
  double clf = 0.0;
  /// Disabled terms stay 0 with has_* false and are omitted from logs.
  double quan = 0.0, csd = 0.0, cd = 0.0;
  bool has_quan = false, has_csd = false, has_cd = false;
  std::size_t steps = 0;
};

/// Throws DimensionError / DataError when the data does not fit the model.
void check_compatible(const ConceptHashModel& model, const Dataset& data);

/// One shuffled pass: forward, total loss, backward, SGD step per batch.
/// Batch order and augmentation depend only on (cfg.seed, epoch).
EpochMetrics train_epoch(ConceptHashModel& model, const Dataset& data, const LossConfig& loss_cfg,
                         const TrainConfig& cfg, std::size_t epoch, SgdMomentum& optimizer);

/// Binarized codes + labels for a whole dataset.
CodeDatabase build_code_database(const ConceptHashModel& model, const Dataset& data);

/// Mean off-diagonal attention correlation over a dataset.
double mean_attention_correlation(const ConceptHashModel& model, const Dataset& data);

/// Mean localization error over samples with landmarks (NaN when none have any).
double mean_localization_error(const ConceptHashModel& model, const Dataset& data);

}  // namespace concepthash
