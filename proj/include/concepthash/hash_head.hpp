// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "concepthash/parameters.hpp"
#include "concepthash/rng.hpp"
#include "concepthash/tensor.hpp"

namespace concepthash {

/// Bit-packed binary code. Bit j lives in word j / 64 at position j % 64;
/// bits past `bits` in the last word are always zero.
class HashCode {
 public:
  HashCode() = default;
  explicit HashCode(std::size_t bits) : bits_(bits), words_(word_count(bits), 0) {}
  HashCode(std::size_t bits, std::vector<std::uint64_t> words);

  static std::size_t word_count(std::size_t bits) { return (bits + 63) / 64; }
  /// From +-1 (or any signed) components: bit set iff component >= 0.
  static HashCode from_signs(std::span<const double> components);

  std::size_t bits() const { return bits_; }
  std::span<const std::uint64_t> words() const { return words_; }
  bool bit(std::size_t j) const { return (words_[j / 64] >> (j % 64)) & 1U; }
  void set(std::size_t j, bool on);
  /// +1 / -1 per bit.
  std::vector<int> to_signs() const;

  bool operator==(const HashCode&) const = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// sign(b) with sign(0) = +1.
HashCode binarize(std::span<const double> code);

/// Concept-generic hashing head: every concept feature is shifted by its own
/// specificity embedding E_m and then mapped by ONE shared affine projection
/// to a K/M-bit sub-code.
class HashHead {
 public:
  HashHead(std::size_t dim, std::size_t bits, std::size_t num_concepts, ParameterStore& store, Rng& rng,
           const std::string& prefix = "head");

  std::size_t bits() const { return bits_; }
  std::size_t num_concepts() const { return concepts_; }
  std::size_t subcode_bits() const { return bits_ / concepts_; }

  const Tensor& projection() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  /// E, M x D. The concept-discrimination loss consumes this same tensor.
  const Tensor& specificity() const { return specificity_; }

  /// Sub-code of concept m from one feature row (1 x D) -> 1 x K/M.
  Tensor subcode(const Tensor& feature, std::size_t m) const;
  /// B x M x D features -> B x K continuous codes; sub-code m occupies
  /// columns [m K/M, (m+1) K/M).
  Tensor full_code(const Tensor& features) const;

 private:
  std::size_t dim_, bits_, concepts_;
  Tensor weight_, bias_, specificity_;
};

}  // namespace concepthash
