// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "stvl/attention.hpp"
#include "stvl/config.hpp"
#include "stvl/video.hpp"

namespace stvl {

struct LsdParams {
  Tensor queries;  // [H_max/(2p), W_max/(2p), d], one per output window position
  AttentionParams attn;

  static LsdParams init(const ModelConfig& cfg, Rng& rng);
  Index query_h() const { return queries.dim(0); }
  Index query_w() const { return queries.dim(1); }
};

// Learned-query attention over each non-overlapping 2x2 window. Output
// (t, i, j) reads only window (2i..2i+1, 2j..2j+1) of frame t. Padded tokens
// are excluded from every window; a window with no real token yields zeros.
PatchGrid lsd_forward(const PatchGrid& grid, const LsdParams& params);

// Mean over the real tokens of each 2x2 window.
PatchGrid avg_pool_forward(const PatchGrid& grid);

// Perceiver-style substitute: query (i, j) attends over every real token of
// its frame instead of its own window. Shares LsdParams.
PatchGrid resampler_forward(const PatchGrid& grid, const LsdParams& params);

}  // namespace stvl
