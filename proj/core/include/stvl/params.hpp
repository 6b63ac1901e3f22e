// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stvl/rng.hpp"
#include "stvl/tensor.hpp"

namespace stvl {

struct ParamEntry {
  std::string name;
  std::string module;
  Tensor tensor;
  bool frozen = false;
};

// Ordered view over every learnable tensor of a model. Entries share nodes
// with the owning module structs, so updates through the store are visible
// to the modules.
class ParamStore {
 public:
  void add(std::string name, std::string module, Tensor t);
  std::vector<ParamEntry>& entries() { return entries_; }
  const std::vector<ParamEntry>& entries() const { return entries_; }
  const ParamEntry& find(const std::string& name) const;
  ParamEntry& find(const std::string& name);

  void zero_grad();
  void set_frozen(const std::function<bool(const ParamEntry&)>& pred, bool frozen);
  Index total_elements() const;

 private:
  std::vector<ParamEntry> entries_;
};

// U(-g, g) with g = 1/sqrt(fan_in).
Tensor init_uniform(Shape shape, Index fan_in, Rng& rng);
Tensor init_constant(Shape shape, double v);

}  // namespace stvl
