// SPDX-License-Identifier: Apache-2.0
#include "concepthash/parameters.hpp"

#include <cstring>

#include "concepthash/errors.hpp"

namespace concepthash {

Tensor ParameterStore::add(const std::string& name, Shape shape, std::vector<double> values, bool trainable) {
  if (index_.contains(name)) throw ContractError("duplicate parameter name: " + name);
  index_.emplace(name, params_.size());
  params_.push_back({name, Tensor::from(std::move(shape), std::move(values), trainable), trainable});
  return params_.back().tensor;
}

Parameter& ParameterStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

const Parameter& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return params_[it->second];
}

std::size_t ParameterStore::element_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::uint64_t ParameterStore::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    mix(p.name.data(), p.name.size());
    for (auto e : p.tensor.shape()) mix(&e, sizeof(e));
    auto v = p.tensor.values();
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

}  // namespace concepthash
