// SPDX-License-Identifier: Apache-2.0
#include "stvl/params.hpp"

#include <cmath>

#include "stvl/errors.hpp"

namespace stvl {

void ParamStore::add(std::string name, std::string module, Tensor t) {
  for (const auto& e : entries_)
    if (e.name == name) throw ConfigError("duplicate parameter name " + name);
  entries_.push_back({std::move(name), std::move(module), std::move(t), false});
}

const ParamEntry& ParamStore::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e;
  throw ConfigError("no parameter named " + name);
}

ParamEntry& ParamStore::find(const std::string& name) {
  return const_cast<ParamEntry&>(std::as_const(*this).find(name));
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParamStore::set_frozen(const std::function<bool(const ParamEntry&)>& pred, bool frozen) {
  for (auto& e : entries_)
    if (pred(e)) e.frozen = frozen;
}

Index ParamStore::total_elements() const {
  Index n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

Tensor init_uniform(Shape shape, Index fan_in, Rng& rng) {
  const double g = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(static_cast<std::size_t>(numel_of(shape)));
  for (auto& x : v) x = rng.uniform(-g, g);
  return Tensor::parameter(std::move(shape), std::move(v));
}

Tensor init_constant(Shape shape, double v) {
  const Index n = numel_of(shape);
  return Tensor::parameter(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

}  // namespace stvl
