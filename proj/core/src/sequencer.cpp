// SPDX-License-Identifier: Apache-2.0
#include "stvl/sequencer.hpp"

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"
#include "stvl/params.hpp"

namespace stvl {

std::string_view role_name(TokenRole r) {
  switch (r) {
    case TokenRole::context: return "context";
    case TokenRole::spatial: return "spatial";
    case TokenRole::row_split: return "row_split";
  }
  return "?";
}

SequenceLayout SequenceLayout::make(int frames, int rows, int cols, bool row_splits) {
  SequenceLayout l;
  l.frames = frames;
  l.rows = rows;
  l.cols = cols;
  l.row_splits = row_splits;
  l.tokens.reserve(static_cast<std::size_t>(frames) * (1 + rows * (cols + 1)));
  for (int f = 0; f < frames; ++f) {
    l.tokens.push_back({TokenRole::context, f, -1, -1});
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) l.tokens.push_back({TokenRole::spatial, f, i, j});
      if (row_splits) l.tokens.push_back({TokenRole::row_split, f, i, -1});
    }
  }
  return l;
}

std::size_t SequenceLayout::frame_length() const {
  return 1 + static_cast<std::size_t>(rows) * (cols + (row_splits ? 1 : 0));
}

std::size_t SequenceLayout::context_index(int frame) const { return frame * frame_length(); }

std::size_t SequenceLayout::spatial_index(int frame, int row, int col) const {
  return frame * frame_length() + 1 + static_cast<std::size_t>(row) * (cols + (row_splits ? 1 : 0)) + col;
}

std::size_t SequenceLayout::row_split_index(int frame, int row) const {
  if (!row_splits) throw std::logic_error("layout has no row split tokens");
  return frame * frame_length() + 1 + static_cast<std::size_t>(row) * (cols + 1) + cols;
}

std::string SequenceLayout::manifest() const {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const auto& t = tokens[i];
    out += std::to_string(i) + "\t" + std::string(role_name(t.role)) + "\t" + std::to_string(t.frame) + "\t" +
           std::to_string(t.row) + "\t" + std::to_string(t.col) + "\n";
  }
  return out;
}

SequencerParams SequencerParams::init(const ModelConfig& cfg, Rng& rng) {
  SequencerParams p;
  p.row_token = init_uniform({cfg.d}, cfg.d, rng);
  p.mlp1_w = init_uniform({cfg.d, cfg.d_mlp}, cfg.d, rng);
  p.mlp1_b = init_constant({cfg.d_mlp}, 0.0);
  p.mlp2_w = init_uniform({cfg.d_mlp, cfg.d_lm}, cfg.d_mlp, rng);
  p.mlp2_b = init_constant({cfg.d_lm}, 0.0);
  return p;
}

Tensor project_tokens(const Tensor& x, const SequencerParams& params) {
  return linear(gelu(linear(x, params.mlp1_w, params.mlp1_b)), params.mlp2_w, params.mlp2_b);
}

VisualTokenSequence build_sequence(const PatchGrid& down, const FrameContext& ctx, const SequencerParams& params,
                                   bool no_row) {
  const int T = down.T();
  const Index d = down.d();
  if (ctx.frames() != T || ctx.data.cols() != d)
    throw ShapeError("build_sequence: context " + shape_str(ctx.data.shape()) + " for grid " +
                     shape_str(down.data.shape()));
  if (params.row_token.numel() != d || params.mlp1_w.dim(0) != d) throw ShapeError("build_sequence: width mismatch");

  SequenceLayout layout = SequenceLayout::make(T, down.valid_h, down.valid_w, !no_row);
  // Source rows: [ctx (T) | grid tokens (T*h*w) | row token (1)].
  const Index grid_off = T;
  const Index row_src = grid_off + down.data.rows();
  std::vector<Index> index;
  index.reserve(layout.size());
  for (const auto& tok : layout.tokens) {
    switch (tok.role) {
      case TokenRole::context: index.push_back(tok.frame); break;
      case TokenRole::spatial: index.push_back(grid_off + down.token(tok.frame, tok.row, tok.col)); break;
      case TokenRole::row_split: index.push_back(row_src); break;
    }
  }
  const Tensor parts[] = {ctx.data, down.data.reshape({down.data.rows(), d}), params.row_token.reshape({1, d})};
  const Tensor flat = gather_rows(concat_rows(parts), index);
  return {project_tokens(flat, params), std::move(layout)};
}

}  // namespace stvl
