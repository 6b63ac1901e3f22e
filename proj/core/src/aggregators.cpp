// SPDX-License-Identifier: Apache-2.0
#include "stvl/aggregators.hpp"

#include <stdexcept>

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"
#include "stvl/params.hpp"

namespace stvl {

FsraParams FsraParams::init(const ModelConfig& cfg, Rng& rng) {
  return {init_uniform({cfg.T_max, cfg.d}, cfg.d, rng), AttentionParams::init(cfg.d, cfg.d, rng)};
}

GstraParams GstraParams::init(const ModelConfig& cfg, Rng& rng) {
  return {init_uniform({1, cfg.d}, cfg.d, rng), AttentionParams::init(cfg.d, cfg.d, rng)};
}

FusionParams FusionParams::init(const ModelConfig& cfg, Rng& rng) {
  FusionParams p;
  p.alpha = init_constant({cfg.d}, 0.5);
  p.proj_w = init_uniform({cfg.d, cfg.d}, cfg.d, rng);
  p.proj_b = init_constant({cfg.d}, 0.0);
  return p;
}

Tensor fsra_forward(const PatchGrid& down, const FsraParams& params) {
  if (down.T() > params.frame_queries.dim(0))
    throw ShapeError("fsra: " + std::to_string(down.T()) + " frames exceed T_max");
  if (params.frame_queries.dim(1) != down.d()) throw ShapeError("fsra: channel mismatch");
  if (down.valid_h < 1 || down.valid_w < 1) throw std::invalid_argument("fsra: frame has no valid tokens");
  AttentionPattern pattern;
  std::vector<Index> keys;
  for (int t = 0; t < down.T(); ++t) {
    keys.clear();
    for (int i = 0; i < down.valid_h; ++i)
      for (int j = 0; j < down.valid_w; ++j) keys.push_back(down.token(t, i, j));
    pattern.add_row(t, keys);
  }
  return attend_pattern(params.frame_queries, down.data, params.attn, pattern);
}

Tensor gstra_forward(const PatchGrid& tokens, const GstraParams& params) {
  if (params.global_query.dim(1) != tokens.d()) throw ShapeError("gstra: channel mismatch");
  if (tokens.valid_h < 1 || tokens.valid_w < 1) throw std::invalid_argument("gstra: every token is masked");
  std::vector<Index> keys;
  for (int t = 0; t < tokens.T(); ++t)
    for (int i = 0; i < tokens.valid_h; ++i)
      for (int j = 0; j < tokens.valid_w; ++j) keys.push_back(tokens.token(t, i, j));
  AttentionPattern pattern;
  pattern.add_row(0, keys);
  return attend_pattern(params.global_query, tokens.data, params.attn, pattern);
}

FrameContext fuse(const Tensor& frame_summaries, const Tensor& global_ctx, const FusionParams& params) {
  const Index T = frame_summaries.rows(), d = frame_summaries.cols();
  if (global_ctx.numel() != d || params.alpha.numel() != d) throw ShapeError("fuse: width mismatch");
  const std::vector<Index> broadcast(static_cast<std::size_t>(T), 0);
  const Tensor g = gather_rows(global_ctx.reshape({1, d}), broadcast);
  // alpha * F + (1 - alpha) * G == alpha * (F - G) + G
  const Tensor mixed = add(mul_row(sub(frame_summaries, g), params.alpha), g);
  return {linear(mixed, params.proj_w, params.proj_b)};
}

FrameContext aggregate(const PatchGrid& down, const PatchGrid& global_tokens, const FsraParams& fsra,
                       const GstraParams& gstra, const FusionParams& fusion, bool no_fsra, bool no_gstra) {
  const Index T = down.T(), d = down.d();
  if (no_fsra && no_gstra) return {linear(Tensor::zeros({T, d}), fusion.proj_w, fusion.proj_b)};
  if (no_gstra) return {linear(fsra_forward(down, fsra), fusion.proj_w, fusion.proj_b)};
  const Tensor g = gstra_forward(global_tokens, gstra);
  if (no_fsra) {
    const std::vector<Index> broadcast(static_cast<std::size_t>(T), 0);
    return {linear(gather_rows(g, broadcast), fusion.proj_w, fusion.proj_b)};
  }
  return fuse(fsra_forward(down, fsra), g, fusion);
}

}  // namespace stvl
