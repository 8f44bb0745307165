// SPDX-License-Identifier: Apache-2.0
#include "concepthash/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "concepthash/errors.hpp"

namespace concepthash {

namespace {
constexpr std::uint64_t kShuffleStream = 0x5348;
constexpr std::uint64_t kAugmentStream = 0x4155;
}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train.epochs: must be positive");
  if (batch_size == 0) throw ConfigError("train.batch_size: must be positive");
  if (!(lr >= 0.0)) throw ConfigError("train.lr: must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum: must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay: must be >= 0");
  if (warmup_epochs > epochs) throw ConfigError("train.warmup_epochs: must not exceed train.epochs");
  augment.validate();
}

double cosine_lr_with_warmup(double epoch, const TrainConfig& cfg) {
  const auto warmup = static_cast<double>(cfg.warmup_epochs);
  const auto total = static_cast<double>(cfg.epochs);
  if (epoch < warmup) return cfg.lr * epoch / warmup;
  if (total <= warmup) return cfg.lr;
  const double progress = std::min(1.0, (epoch - warmup) / (total - warmup));
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity, double lr,
                       double momentum, double weight_decay) {
  if (grads.size() != params.size() || velocity.size() != params.size())
    throw DimensionError("sgd_momentum_step: buffer sizes differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grads[i] + weight_decay * params[i]);
    params[i] -= lr * velocity[i];
  }
}

SgdMomentum::SgdMomentum(ParameterStore& store, double momentum, double weight_decay)
    : store_(store), momentum_(momentum), weight_decay_(weight_decay) {
  for (const auto& p : store_.all()) velocity_.emplace_back(p.trainable ? p.tensor.size() : 0, 0.0);
}

void SgdMomentum::step(double lr) {
  auto& params = store_.all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].trainable) continue;
    Tensor& t = params[i].tensor;
    sgd_momentum_step(t.mutable_values(), t.grad(), velocity_[i], lr, momentum_, weight_decay_);
  }
}

void check_compatible(const ConceptHashModel& model, const Dataset& data) {
  const auto& enc = model.config().encoder;
  if (data.size() == 0) throw DataError("dataset is empty");
  if (data.num_classes != model.config().classes)
    throw DataError("dataset has " + std::to_string(data.num_classes) + " classes, model expects " +
                    std::to_string(model.config().classes));
  for (const auto& s : data.samples) {
    if (s.image.channels != enc.channels || s.image.height != enc.image_size || s.image.width != enc.image_size)
      throw DimensionError("dataset image " + std::to_string(s.image.channels) + "x" + std::to_string(s.image.height) +
                           "x" + std::to_string(s.image.width) + " does not match encoder " +
                           std::to_string(enc.channels) + "x" + std::to_string(enc.image_size) + "x" +
                           std::to_string(enc.image_size));
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.config().classes)
      throw DataError("label " + std::to_string(s.label) + " out of range");
  }
}

EpochMetrics train_epoch(ConceptHashModel& model, const Dataset& data, const LossConfig& loss_cfg,
                         const TrainConfig& cfg, std::size_t epoch, SgdMomentum& optimizer) {
  check_compatible(model, data);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffle_rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const std::size_t steps = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::uint64_t aug_base = derive_seed(derive_seed(cfg.seed, kAugmentStream), epoch);
  EpochMetrics m;
  m.epoch = epoch;
  m.has_quan = loss_cfg.enable_quan;
  m.has_csd = loss_cfg.enable_csd;
  m.has_cd = loss_cfg.enable_cd;

  std::vector<Image> images;
  std::vector<int> labels;
  for (std::size_t step = 0; step < steps; ++step) {
    const std::size_t begin = step * cfg.batch_size, end = std::min(n, begin + cfg.batch_size);
    images.clear();
    labels.clear();
    for (std::size_t k = begin; k < end; ++k) {
      const Sample& s = data.samples[order[k]];
      images.push_back(cfg.augment.enabled ? augment(s, cfg.augment, derive_seed(aug_base, k)).image : s.image);
      labels.push_back(s.label);
    }
    const double lr = cosine_lr_with_warmup(static_cast<double>(epoch) + static_cast<double>(step) / steps, cfg);

    ForwardResult out = model.forward(images);
    LossParts parts = model.losses(out, labels, loss_cfg);
    Tensor loss = total_loss(parts, loss_cfg);
    model.parameters().zero_grad();
    loss.backward();
    optimizer.step(lr);

    const double w = static_cast<double>(end - begin);
    m.loss += w * loss.item();
    m.clf += w * parts.clf.item();
    if (m.has_quan) m.quan += w * parts.quan.item();
    if (m.has_csd) m.csd += w * parts.csd.item();
    if (m.has_cd) m.cd += w * parts.cd.item();
    m.lr = lr;
  }
  const double inv = 1.0 / static_cast<double>(n);
  m.loss *= inv;
  m.clf *= inv;
  m.quan *= inv;
  m.csd *= inv;
  m.cd *= inv;
  m.steps = steps;
  return m;
}

namespace {
std::vector<Image> collect_images(const Dataset& data) {
  std::vector<Image> images;
  images.reserve(data.size());
  for (const auto& s : data.samples) images.push_back(s.image);
  return images;
}
}  // namespace

CodeDatabase build_code_database(const ConceptHashModel& model, const Dataset& data) {
  check_compatible(model, data);
  CodeDatabase db;
  db.bits = model.config().bits;
  db.codes = model.encode(collect_images(data));
  db.labels = data.labels();
  if (data.has_family()) db.family_labels = data.families();
  return db;
}

double mean_attention_correlation(const ConceptHashModel& model, const Dataset& data) {
  check_compatible(model, data);
  const auto maps = model.attention_maps(collect_images(data));
  const std::size_t m = model.config().num_concepts();
  const std::size_t hw = model.config().encoder.num_patches();
  Tensor attn = Tensor::from({data.size(), m, hw}, maps);
  return mean_off_diagonal(attention_correlation(attn), m);
}

double mean_localization_error(const ConceptHashModel& model, const Dataset& data) {
  check_compatible(model, data);
  const auto maps = model.attention_maps(collect_images(data));
  const auto& enc = model.config().encoder;
  const std::size_t stride = enc.num_concepts * enc.num_patches();
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& marks = data.samples[i].landmarks;
    if (marks.empty()) continue;
    total += localization_error(std::span<const double>(maps).subspan(i * stride, stride), enc.num_concepts, marks,
                                enc.image_size, enc.patch_size);
    ++counted;
  }
  return counted == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(counted);
}

}  // namespace concepthash
