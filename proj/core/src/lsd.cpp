// SPDX-License-Identifier: Apache-2.0
#include "stvl/lsd.hpp"

#include <array>

#include "stvl/errors.hpp"
#include "stvl/params.hpp"

namespace stvl {

namespace {

void check_even(const PatchGrid& grid, const char* who) {
  if (grid.h() % 2 || grid.w() % 2)
    throw ShapeError(std::string(who) + ": grid " + std::to_string(grid.h()) + "x" + std::to_string(grid.w()) +
                     " must have even height and width");
}

void check_queries(const PatchGrid& grid, const LsdParams& params) {
  if (grid.h() / 2 > params.query_h() || grid.w() / 2 > params.query_w())
    throw ShapeError("lsd: grid exceeds the configured maximum resolution");
  if (params.queries.dim(2) != grid.d() || params.attn.d_in() != grid.d())
    throw ShapeError("lsd: channel mismatch");
}

// Real tokens of window (t, i, j).
std::array<Index, 4> window_keys(const PatchGrid& grid, int t, int i, int j, int& count) {
  std::array<Index, 4> keys{};
  count = 0;
  for (int dy = 0; dy < 2; ++dy)
    for (int dx = 0; dx < 2; ++dx)
      if (grid.valid(2 * i + dy, 2 * j + dx)) keys[count++] = grid.token(t, 2 * i + dy, 2 * j + dx);
  return keys;
}

PatchGrid halved(const Tensor& data, const PatchGrid& grid) {
  return {data.reshape({grid.T(), grid.h() / 2, grid.w() / 2, grid.d()}), (grid.valid_h + 1) / 2,
          (grid.valid_w + 1) / 2};
}

}  // namespace

LsdParams LsdParams::init(const ModelConfig& cfg, Rng& rng) {
  LsdParams p;
  const Index qh = cfg.grid_h() / 2, qw = cfg.grid_w() / 2;
  p.queries = init_uniform({qh, qw, cfg.d}, cfg.d, rng);
  p.attn = AttentionParams::init(cfg.d, cfg.d, rng);
  return p;
}

PatchGrid lsd_forward(const PatchGrid& grid, const LsdParams& params) {
  check_even(grid, "lsd");
  check_queries(grid, params);
  const int ho = grid.h() / 2, wo = grid.w() / 2;
  AttentionPattern pattern;
  for (int t = 0; t < grid.T(); ++t)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        int n = 0;
        const auto keys = window_keys(grid, t, i, j, n);
        pattern.add_row(i * params.query_w() + j, std::span<const Index>(keys.data(), static_cast<std::size_t>(n)));
      }
  const Tensor out = attend_pattern(params.queries.reshape({params.query_h() * params.query_w(), grid.d()}), grid.data,
                                    params.attn, pattern);
  return halved(out, grid);
}

PatchGrid avg_pool_forward(const PatchGrid& grid) {
  check_even(grid, "avg_pool");
  const int ho = grid.h() / 2, wo = grid.w() / 2;
  AttentionPattern pattern;
  for (int t = 0; t < grid.T(); ++t)
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        int n = 0;
        const auto keys = window_keys(grid, t, i, j, n);
        pattern.add_row(0, std::span<const Index>(keys.data(), static_cast<std::size_t>(n)));
      }
  // Zero scores give exactly uniform weights over each window's real tokens.
  const Tensor q = Tensor::zeros({1, 1});
  const Tensor k = Tensor::zeros({grid.data.rows(), 1});
  return halved(attention(q, k, grid.data, pattern, 1, 1.0), grid);
}

PatchGrid resampler_forward(const PatchGrid& grid, const LsdParams& params) {
  check_even(grid, "resampler");
  check_queries(grid, params);
  const int ho = grid.h() / 2, wo = grid.w() / 2;
  AttentionPattern pattern;
  std::vector<Index> frame_keys;
  for (int t = 0; t < grid.T(); ++t) {
    frame_keys.clear();
    for (int y = 0; y < grid.valid_h; ++y)
      for (int x = 0; x < grid.valid_w; ++x) frame_keys.push_back(grid.token(t, y, x));
    for (int i = 0; i < ho; ++i)
      for (int j = 0; j < wo; ++j) {
        const bool real = i < (grid.valid_h + 1) / 2 && j < (grid.valid_w + 1) / 2;
        pattern.add_row(i * params.query_w() + j, real ? std::span<const Index>(frame_keys) : std::span<const Index>());
      }
  }
  const Tensor out = attend_pattern(params.queries.reshape({params.query_h() * params.query_w(), grid.d()}), grid.data,
                                    params.attn, pattern);
  return halved(out, grid);
}

}  // namespace stvl
