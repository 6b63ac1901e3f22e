// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "stvl/aggregators.hpp"
#include "stvl/config.hpp"
#include "stvl/video.hpp"

namespace stvl {

enum class TokenRole { context, spatial, row_split };

std::string_view role_name(TokenRole r);

struct TokenInfo {
  TokenRole role;
  int frame;
  int row;  // -1 for context tokens
  int col;  // -1 for context and row_split tokens
};

// Per frame: [context, then for each row: its spatial tokens, then <row>].
// With row splits disabled the <row> entries are simply absent.
struct SequenceLayout {
  std::vector<TokenInfo> tokens;
  int frames = 0, rows = 0, cols = 0;
  bool row_splits = true;

  static SequenceLayout make(int frames, int rows, int cols, bool row_splits);
  std::size_t size() const { return tokens.size(); }
  std::size_t frame_length() const;
  // Position of a token within the full sequence.
  std::size_t context_index(int frame) const;
  std::size_t spatial_index(int frame, int row, int col) const;
  std::size_t row_split_index(int frame, int row) const;
  // One "index\trole\tframe\trow\tcol" line per token.
  std::string manifest() const;
};

struct VisualTokenSequence {
  Tensor tokens;  // [M, d_lm]
  SequenceLayout layout;
  std::size_t size() const { return layout.size(); }
};

struct SequencerParams {
  Tensor row_token;        // [d]
  Tensor mlp1_w, mlp1_b;   // [d, d_mlp], [d_mlp]
  Tensor mlp2_w, mlp2_b;   // [d_mlp, d_lm], [d_lm]
  static SequencerParams init(const ModelConfig& cfg, Rng& rng);
};

// Pointwise two-layer MLP with GELU, visual width -> LM width.
Tensor project_tokens(const Tensor& x, const SequencerParams& params);

// Assembles the per-frame layout over the real (non-padded) token rows and
// columns of `down` and projects every token, context and <row> included,
// through the same MLP.
VisualTokenSequence build_sequence(const PatchGrid& down, const FrameContext& ctx, const SequencerParams& params,
                                   bool no_row = false);

}  // namespace stvl
