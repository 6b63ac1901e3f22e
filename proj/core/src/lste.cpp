// SPDX-License-Identifier: Apache-2.0
#include "stvl/lste.hpp"

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"
#include "stvl/params.hpp"

namespace stvl {

LsteParams LsteParams::init(const ModelConfig& cfg, Rng& rng) {
  const Index d = cfg.d, b = cfg.bottleneck();
  LsteParams p;
  p.conv1_w = init_uniform({d, b}, d, rng);
  p.conv1_b = init_constant({b}, 0.0);
  p.conv2_w = init_uniform({3, b, b}, 3 * b, rng);
  p.conv2_b = init_constant({b}, 0.0);
  p.conv3_w = init_uniform({b, d}, b, rng);
  p.conv3_b = init_constant({d}, 0.0);
  p.dpe_w = init_uniform({27, d}, 27, rng);
  p.dpe_b = init_constant({d}, 0.0);
  return p;
}

LsteParams LsteParams::zeros(Index d, Index b) {
  LsteParams p;
  p.conv1_w = init_constant({d, b}, 0.0);
  p.conv1_b = init_constant({b}, 0.0);
  p.conv2_w = init_constant({3, b, b}, 0.0);
  p.conv2_b = init_constant({b}, 0.0);
  p.conv3_w = init_constant({b, d}, 0.0);
  p.conv3_b = init_constant({d}, 0.0);
  p.dpe_w = init_constant({27, d}, 0.0);
  p.dpe_b = init_constant({d}, 0.0);
  return p;
}

PatchGrid lste_forward(const PatchGrid& grid, const LsteParams& params, bool activation) {
  const Index d = grid.d();
  if (params.conv1_w.dim(0) != d || params.conv3_w.dim(1) != d || params.dpe_w.dim(1) != d)
    throw ShapeError("lste: grid has " + std::to_string(d) + " channels, parameters expect " +
                     std::to_string(params.conv1_w.dim(0)));
  const Index b = params.conv1_w.dim(1);
  if (params.conv2_w.dim(1) != b || params.conv2_w.dim(2) != b || params.conv3_w.dim(0) != b)
    throw ShapeError("lste: inconsistent bottleneck width");

  const bool padded = grid.valid_h < grid.h() || grid.valid_w < grid.w();
  const auto mask = grid.token_mask();
  // Padded sites only leak into real ones through the spatial taps of the
  // positional conv, so masking its input and the final output suffices.
  auto remask = [&](const Tensor& t) { return padded ? mask_rows(t, mask) : t; };

  Tensor a = linear(grid.data, params.conv1_w, params.conv1_b);
  if (activation) a = gelu(a);
  Tensor c = add_row(temporal_conv3(a, params.conv2_w), params.conv2_b);
  if (activation) c = gelu(c);
  Tensor e = linear(c, params.conv3_w, params.conv3_b);
  Tensor local = remask(add(e, grid.data));
  Tensor pos = add_row(depthwise_conv3d(local, params.dpe_w), params.dpe_b);
  Tensor out = remask(add(local, pos));
  return {out, grid.valid_h, grid.valid_w};
}

}  // namespace stvl
