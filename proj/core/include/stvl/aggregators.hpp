// SPDX-License-Identifier: Apache-2.0
//
// Frame-wise and global relationship aggregators and their learned fusion
// into one conditioned context vector per frame.
#pragma once

#include "stvl/attention.hpp"
#include "stvl/config.hpp"
#include "stvl/video.hpp"

namespace stvl {

struct FsraParams {
  Tensor frame_queries;  // [T_max, d]; row t serves frame t only
  AttentionParams attn;
  static FsraParams init(const ModelConfig& cfg, Rng& rng);
};

struct GstraParams {
  Tensor global_query;  // [1, d]
  AttentionParams attn;
  static GstraParams init(const ModelConfig& cfg, Rng& rng);
};

struct FusionParams {
  Tensor alpha;   // [d], unconstrained, starts at 0.5
  Tensor proj_w;  // [d, d]
  Tensor proj_b;  // [d]
  static FusionParams init(const ModelConfig& cfg, Rng& rng);
};

// [T, d], one conditioned row per input frame.
struct FrameContext {
  Tensor data;
  Index frames() const { return data.rows(); }
};

// Row t: frame query t attending over the real tokens of frame t.
Tensor fsra_forward(const PatchGrid& down, const FsraParams& params);
// [1, d]: the global query attending over every real token of every frame.
Tensor gstra_forward(const PatchGrid& tokens, const GstraParams& params);
// Row t = proj(alpha * F_s[t] + (1 - alpha) * G).
FrameContext fuse(const Tensor& frame_summaries, const Tensor& global_ctx, const FusionParams& params);

// Switch-aware composition. `no_fsra` replaces every frame summary by the
// global context; `no_gstra` drops the global path (rows = proj(F_s[t]));
// with both set the context rows are proj(0).
FrameContext aggregate(const PatchGrid& down, const PatchGrid& global_tokens, const FsraParams& fsra,
                       const GstraParams& gstra, const FusionParams& fusion, bool no_fsra, bool no_gstra);

}  // namespace stvl
