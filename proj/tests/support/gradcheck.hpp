// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "stvl/tensor.hpp"

namespace stvl::testing {

struct GradCheckResult {
  std::string name;
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  std::size_t checked = 0;
};

// Compares backward() gradients of the scalar `loss()` with central
// differences for each tensor. `max_elements` > 0 checks an evenly strided
// subset of that many entries per tensor.
inline std::vector<GradCheckResult> grad_check(const std::function<Tensor()>& loss,
                                               std::vector<std::pair<std::string, Tensor>> params,
                                               double h = 1e-5, std::size_t max_elements = 0) {
  for (auto& [name, t] : params) t.zero_grad();
  loss().backward();
  std::vector<GradCheckResult> out;
  for (auto& [name, t] : params) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    const std::size_t n = static_cast<std::size_t>(t.numel());
    const std::size_t stride = max_elements > 0 && n > max_elements ? n / max_elements : 1;
    GradCheckResult r;
    r.name = name;
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < n; i += stride) {
      auto v = t.mutable_data();
      const double orig = v[i];
      double plus, minus;
      {
        NoGradGuard ng;
        v[i] = orig + h;
        plus = loss().item();
        v[i] = orig - h;
        minus = loss().item();
        v[i] = orig;
      }
      const double numeric = (plus - minus) / (2 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      diff += (a - numeric) * (a - numeric);
      na += a * a;
      nn += numeric * numeric;
      ++r.checked;
    }
    r.analytic_norm = std::sqrt(na);
    r.numeric_norm = std::sqrt(nn);
    const double denom = std::max(r.analytic_norm, r.numeric_norm);
    r.rel_error = denom < 1e-12 ? 0.0 : std::sqrt(diff) / denom;
    out.push_back(r);
  }
  for (auto& [name, t] : params) t.zero_grad();
  return out;
}

}  // namespace stvl::testing
