// SPDX-License-Identifier: Apache-2.0
#include "stvl/attention.hpp"

#include <cmath>
#include <stdexcept>

#include "stvl/errors.hpp"
#include "stvl/params.hpp"

namespace stvl {

AttentionParams AttentionParams::init(Index d_in, Index d_attn, Rng& rng) {
  AttentionParams p;
  p.wq = init_uniform({d_in, d_attn}, d_in, rng);
  p.wk = init_uniform({d_in, d_attn}, d_in, rng);
  p.wv = init_uniform({d_in, d_attn}, d_in, rng);
  return p;
}

Tensor attend(const Tensor& query, const Tensor& keys, const Tensor& values, const AttentionParams& params,
              std::span<const unsigned char> mask) {
  if (keys.rows() != values.rows() || static_cast<Index>(mask.size()) != keys.rows())
    throw ShapeError("attend: keys, values and mask must have the same length");
  std::vector<Index> live;
  for (std::size_t k = 0; k < mask.size(); ++k)
    if (mask[k]) live.push_back(static_cast<Index>(k));
  if (live.empty()) throw std::invalid_argument("attend: every key is masked");

  AttentionPattern pattern;
  for (Index i = 0; i < query.rows(); ++i) pattern.add_row(i, live);
  const Tensor q = matmul(query, params.wq);
  const Tensor k = matmul(keys, params.wk);
  const Tensor v = matmul(values, params.wv);
  return attention(q, k, v, pattern, 1, 1.0 / std::sqrt(static_cast<double>(params.d_attn())));
}

Tensor attend_pattern(const Tensor& queries, const Tensor& tokens, const AttentionParams& params,
                      const AttentionPattern& pattern) {
  const Tensor q = matmul(queries, params.wq);
  const Tensor k = matmul(tokens, params.wk);
  const Tensor v = matmul(tokens, params.wv);
  return attention(q, k, v, pattern, 1, 1.0 / std::sqrt(static_cast<double>(params.d_attn())));
}

}  // namespace stvl
