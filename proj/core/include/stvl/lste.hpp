// SPDX-License-Identifier: Apache-2.0
//
// Local spatio-temporal encoding: a bottlenecked (1,1,1) -> (3,1,1) -> (1,1,1)
// convolution stack with a residual, followed by a depthwise (3,3,3)
// positional convolution, also residual. All convolutions are "same" with
// zero padding, so the grid shape is preserved.
#pragma once

#include "stvl/config.hpp"
#include "stvl/video.hpp"

namespace stvl {

struct LsteParams {
  Tensor conv1_w, conv1_b;  // [d, d/r], [d/r]
  Tensor conv2_w, conv2_b;  // [3, d/r, d/r] (temporal tap, in, out), [d/r]
  Tensor conv3_w, conv3_b;  // [d/r, d], [d]
  Tensor dpe_w, dpe_b;      // [27, d] depthwise taps in (dt, dy, dx) order, [d]

  static LsteParams init(const ModelConfig& cfg, Rng& rng);
  static LsteParams zeros(Index d, Index bottleneck);
};

// `activation` inserts GELU after conv1 and conv2; off reproduces the plain
// linear stack.
PatchGrid lste_forward(const PatchGrid& grid, const LsteParams& params, bool activation = false);

}  // namespace stvl
