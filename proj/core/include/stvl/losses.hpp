// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "stvl/tensor.hpp"

namespace stvl {

inline constexpr double kCosineEps = 1e-8;

// -(1/M) sum_i cos(pred_i, teacher_i), each norm padded by eps. With
// `rows` non-empty only those rows are averaged. In strict mode a zero-norm
// row throws std::domain_error instead of being guarded.
Tensor distill_loss(const Tensor& pred, const Tensor& teacher, std::span<const Index> rows = {},
                    bool strict = false, double eps = kCosineEps);

// Mean squared error over all entries of the selected rows.
Tensor distill_loss_mse(const Tensor& pred, const Tensor& teacher, std::span<const Index> rows = {});

// Mean negative log-likelihood of targets under softmax(logits). When
// `weights` is non-empty, row i contributes with weight weights[i] and the
// mean is over the weight sum. Throws std::out_of_range for a bad target id.
Tensor text_loss(const Tensor& logits, std::span<const int> targets, std::span<const double> weights = {});

}  // namespace stvl
