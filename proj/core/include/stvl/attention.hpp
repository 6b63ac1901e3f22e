// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>

#include "stvl/ops.hpp"
#include "stvl/rng.hpp"

namespace stvl {

// Single-head scaled dot-product attention with learned query, key and value
// projections (no biases). d_attn = d everywhere in the visual path.
struct AttentionParams {
  Tensor wq, wk, wv;  // [d_in, d_attn] each

  static AttentionParams init(Index d_in, Index d_attn, Rng& rng);
  Index d_in() const { return wq.dim(0); }
  Index d_attn() const { return wq.dim(1); }
};

// softmax(Pq(q) Pk(K)^T / sqrt(d_attn)) Pv(V) over the keys with mask[k] != 0.
// Masked keys get exactly zero weight. Throws std::invalid_argument when
// every key is masked.
Tensor attend(const Tensor& query, const Tensor& keys, const Tensor& values, const AttentionParams& params,
              std::span<const unsigned char> mask);

// Projected attention over an explicit pattern: pattern.query_row indexes
// rows of `queries`, pattern keys index rows of `tokens` (used as both keys
// and values).
Tensor attend_pattern(const Tensor& queries, const Tensor& tokens, const AttentionParams& params,
                      const AttentionPattern& pattern);

}  // namespace stvl
