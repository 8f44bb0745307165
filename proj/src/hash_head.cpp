// SPDX-License-Identifier: Apache-2.0
#include "concepthash/hash_head.hpp"

#include "concepthash/errors.hpp"

namespace concepthash {

HashCode::HashCode(std::size_t bits, std::vector<std::uint64_t> words) : bits_(bits), words_(std::move(words)) {
  if (words_.size() != word_count(bits_))
    throw DimensionError("HashCode: " + std::to_string(words_.size()) + " words cannot hold " +
                         std::to_string(bits_) + " bits");
  if (bits_ % 64 != 0 && !words_.empty()) words_.back() &= (std::uint64_t{1} << (bits_ % 64)) - 1;
}

HashCode HashCode::from_signs(std::span<const double> components) {
  HashCode code(components.size());
  for (std::size_t j = 0; j < components.size(); ++j)
    if (components[j] >= 0.0) code.words_[j / 64] |= std::uint64_t{1} << (j % 64);
  return code;
}

void HashCode::set(std::size_t j, bool on) {
  if (j >= bits_) throw std::out_of_range("HashCode::set: bit index out of range");
  const std::uint64_t mask = std::uint64_t{1} << (j % 64);
  if (on)
    words_[j / 64] |= mask;
  else
    words_[j / 64] &= ~mask;
}

std::vector<int> HashCode::to_signs() const {
  std::vector<int> out(bits_);
  for (std::size_t j = 0; j < bits_; ++j) out[j] = bit(j) ? 1 : -1;
  return out;
}

HashCode binarize(std::span<const double> code) { return HashCode::from_signs(code); }

HashHead::HashHead(std::size_t dim, std::size_t bits, std::size_t num_concepts, ParameterStore& store, Rng& rng,
                   const std::string& prefix)
    : dim_(dim), bits_(bits), concepts_(num_concepts) {
  if (num_concepts == 0) throw ConfigError("M: must be at least 1");
  if (bits == 0 || bits % num_concepts != 0)
    throw ConfigError("K: " + std::to_string(bits) + " is not divisible by M = " + std::to_string(num_concepts));
  const std::size_t sub = bits / num_concepts;
  weight_ = store.add(prefix + ".projection.weight", {dim, sub}, truncated_normal_vector(rng, dim * sub, 0.02));
  bias_ = store.add(prefix + ".projection.bias", {sub}, std::vector<double>(sub, 0.0));
  specificity_ = store.add(prefix + ".specificity", {num_concepts, dim},
                           truncated_normal_vector(rng, num_concepts * dim, 0.02));
}

Tensor HashHead::subcode(const Tensor& feature, std::size_t m) const {
  if (m >= concepts_) throw std::out_of_range("subcode: concept index " + std::to_string(m) + " >= M");
  if (feature.size() != dim_) throw DimensionError("subcode: feature width mismatch");
  Tensor row = reshape(feature, {1, dim_});
  Tensor shifted = add(row, slice_rows(specificity_, m, m + 1));
  return linear(shifted, weight_, bias_);
}

Tensor HashHead::full_code(const Tensor& features) const {
  if (features.rank() != 3 || features.dim(1) != concepts_ || features.dim(2) != dim_)
    throw DimensionError("full_code: expected B x " + std::to_string(concepts_) + " x " + std::to_string(dim_) +
                         ", got " + shape_string(features.shape()));
  const std::size_t batch = features.dim(0);
  Tensor shifted = add_rows(reshape(features, {batch * concepts_, dim_}), specificity_);
  // Row-major (B*M) x K/M is exactly B x K with sub-codes laid out in order.
  return reshape(linear(shifted, weight_, bias_), {batch, bits_});
}

}  // namespace concepthash
