// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "concepthash/tensor.hpp"

namespace concepthash {

struct Parameter {
  std::string name;
  Tensor tensor;
  /// Frozen buffers (e.g. text embeddings) are checkpointed but never updated.
  bool trainable = true;
};

/// Ordered, name-unique registry of model parameters. Registration order is
/// the checkpoint manifest order.
class ParameterStore {
 public:
  /// Registers a new leaf. Throws ContractError on a duplicate name.
  Tensor add(const std::string& name, Shape shape, std::vector<double> values, bool trainable = true);

  bool contains(const std::string& name) const { return index_.contains(name); }
  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t element_count() const;

  void zero_grad();
  /// FNV-1a over names, shapes and value bytes.
  std::uint64_t checksum() const;

 private:
  std::vector<Parameter> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace concepthash
