// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Matrices are row-major; any tensor is viewed as
// [rows, cols] with cols the last axis.
#pragma once

#include <span>
#include <vector>

#include "stvl/tensor.hpp"

namespace stvl {

// [.., k] x [k, m] -> [.., m]
Tensor matmul(const Tensor& a, const Tensor& b);
// x W + b; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b = {});

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// Broadcast a [cols] vector over every row.
Tensor add_row(const Tensor& a, const Tensor& v);
Tensor mul_row(const Tensor& a, const Tensor& v);

Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// out[i] = a[index[i]] row-wise; index -1 yields a zero row. Result shape is
// [index.size(), cols].
Tensor gather_rows(const Tensor& a, std::span<const Index> index);
Tensor concat_rows(std::span<const Tensor> parts);
// Zeroes rows where keep[i] == 0; shape preserved.
Tensor mask_rows(const Tensor& a, std::span<const unsigned char> keep);

// x [T, h, w, c_in], w [3, c_in, c_out] -> [T, h, w, c_out]. Kernel (3,1,1)
// along T with one zero frame of padding on each side.
Tensor temporal_conv3(const Tensor& x, const Tensor& w);
// x [T, h, w, c], w [27, c]: depthwise (3,3,3) with zero "same" padding.
// Tap order is (dt, dy, dx) row-major, each offset in {-1, 0, 1}.
Tensor depthwise_conv3d(const Tensor& x, const Tensor& w);

// Sparse attention layout: output row i reads query row query_row[i] and
// attends over keys[offsets[i] .. offsets[i+1]).
struct AttentionPattern {
  std::vector<Index> query_row;
  std::vector<Index> offsets{0};
  std::vector<Index> keys;

  Index rows() const { return static_cast<Index>(query_row.size()); }
  void add_row(Index q, std::span<const Index> key_rows);
  std::span<const Index> keys_of(Index i) const {
    return std::span<const Index>(keys).subspan(static_cast<std::size_t>(offsets[i]),
                                                static_cast<std::size_t>(offsets[i + 1] - offsets[i]));
  }
};

// softmax(scale * q . k) weighted sum of v, independently per head, where
// heads split the columns of q/k and of v into n_heads contiguous blocks.
// A row with no keys produces zeros.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionPattern& pattern,
                 int n_heads, double scale);

}  // namespace stvl
