// SPDX-License-Identifier: Apache-2.0
#include "stvl/video.hpp"

#include <cmath>

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"
#include "stvl/params.hpp"

namespace stvl {

VideoClip VideoClip::zeros(int T, int H, int W) {
  VideoClip c;
  c.T = T;
  c.H = H;
  c.W = W;
  c.valid_h = H;
  c.valid_w = W;
  c.pixels.assign(static_cast<std::size_t>(T) * H * W * 3, 0.0);
  return c;
}

void VideoClip::validate(const ModelConfig& cfg) const {
  if (T < 1 || T > cfg.T_max) throw ShapeError("clip has " + std::to_string(T) + " frames, limit " + std::to_string(cfg.T_max));
  if (H < 1 || W < 1 || H > cfg.H_max || W > cfg.W_max)
    throw ShapeError("clip is " + std::to_string(H) + "x" + std::to_string(W) + ", limit " + std::to_string(cfg.H_max) +
                     "x" + std::to_string(cfg.W_max));
  if (pixels.size() != static_cast<std::size_t>(T) * H * W * 3) throw ShapeError("clip pixel buffer size");
  if (valid_h < 1 || valid_w < 1 || valid_h > H || valid_w > W) throw ShapeError("clip valid extent out of range");
  for (double v : pixels)
    if (!std::isfinite(v)) throw ShapeError("clip contains non-finite values");
}

VideoClip pad_clip(const VideoClip& clip, int H, int W, double fill) {
  if (H < clip.H || W < clip.W) throw ShapeError("pad_clip: target smaller than clip");
  VideoClip out = VideoClip::zeros(clip.T, H, W);
  std::fill(out.pixels.begin(), out.pixels.end(), fill);
  out.valid_h = clip.valid_h;
  out.valid_w = clip.valid_w;
  for (int t = 0; t < clip.T; ++t)
    for (int y = 0; y < clip.H; ++y)
      for (int x = 0; x < clip.W; ++x)
        for (int c = 0; c < 3; ++c) out.at(t, y, x, c) = clip.at(t, y, x, c);
  return out;
}

VideoClip pad_to_multiple(const VideoClip& clip, int multiple) {
  auto up = [multiple](int v) { return (v + multiple - 1) / multiple * multiple; };
  return pad_clip(clip, up(clip.H), up(clip.W));
}

VideoClip half_resolution(const VideoClip& clip) {
  if (clip.H % 2 || clip.W % 2) throw ShapeError("half_resolution: odd frame size");
  VideoClip out = VideoClip::zeros(clip.T, clip.H / 2, clip.W / 2);
  out.valid_h = (clip.valid_h + 1) / 2;
  out.valid_w = (clip.valid_w + 1) / 2;
  // Pixels outside the valid extent count as zero.
  auto px = [&clip](int t, int y, int x, int c) {
    return y < clip.valid_h && x < clip.valid_w ? clip.at(t, y, x, c) : 0.0;
  };
  for (int t = 0; t < out.T; ++t)
    for (int y = 0; y < out.H; ++y)
      for (int x = 0; x < out.W; ++x)
        for (int c = 0; c < 3; ++c)
          out.at(t, y, x, c) = 0.25 * (px(t, 2 * y, 2 * x, c) + px(t, 2 * y, 2 * x + 1, c) +
                                       px(t, 2 * y + 1, 2 * x, c) + px(t, 2 * y + 1, 2 * x + 1, c));
  return out;
}

VideoClip select_frames(const VideoClip& clip, const std::vector<int>& frames) {
  VideoClip out = VideoClip::zeros(static_cast<int>(frames.size()), clip.H, clip.W);
  out.valid_h = clip.valid_h;
  out.valid_w = clip.valid_w;
  const std::size_t fs = clip.frame_size();
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i] < 0 || frames[i] >= clip.T) throw ShapeError("select_frames: index out of range");
    std::copy_n(clip.pixels.begin() + static_cast<std::ptrdiff_t>(frames[i] * fs), fs,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(i * fs));
  }
  return out;
}

std::vector<unsigned char> PatchGrid::token_mask() const {
  std::vector<unsigned char> m(static_cast<std::size_t>(T()) * h() * w());
  for (int t = 0; t < T(); ++t)
    for (int i = 0; i < h(); ++i)
      for (int j = 0; j < w(); ++j) m[static_cast<std::size_t>(token(t, i, j))] = valid(i, j);
  return m;
}

PatchEmbedParams PatchEmbedParams::init(const ModelConfig& cfg, Rng& rng) {
  const Index in = 3 * cfg.p * cfg.p;
  return {init_uniform({in, cfg.d}, in, rng), init_constant({cfg.d}, 0.0)};
}

std::vector<double> extract_patches(const VideoClip& clip, int p) {
  if (p < 1 || clip.H % p || clip.W % p)
    throw ShapeError("patchify: frame " + std::to_string(clip.H) + "x" + std::to_string(clip.W) +
                     " is not divisible by patch size " + std::to_string(p));
  const int h = clip.H / p, w = clip.W / p;
  const std::size_t pd = static_cast<std::size_t>(3 * p * p);
  std::vector<double> out(static_cast<std::size_t>(clip.T) * h * w * pd, 0.0);
  for (int t = 0; t < clip.T; ++t)
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j) {
        double* dst = out.data() + ((static_cast<std::size_t>(t) * h + i) * w + j) * pd;
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x) {
            const int gy = i * p + y, gx = j * p + x;
            if (gy >= clip.valid_h || gx >= clip.valid_w) continue;
            for (int c = 0; c < 3; ++c) dst[(y * p + x) * 3 + c] = clip.at(t, gy, gx, c);
          }
      }
  return out;
}

PatchGrid patchify(const VideoClip& clip, const PatchEmbedParams& params, int p) {
  const Index pd = 3 * p * p;
  if (params.weight.ndim() != 2 || params.weight.dim(0) != pd || params.bias.numel() != params.weight.dim(1))
    throw ShapeError("patchify: embedding is " + shape_str(params.weight.shape()) + ", expected [" +
                     std::to_string(pd) + ", d]");
  auto patches = extract_patches(clip, p);
  const int h = clip.H / p, w = clip.W / p;
  const Index d = params.weight.dim(1);
  const Index n = static_cast<Index>(clip.T) * h * w;
  Tensor x = Tensor::from({n, pd}, std::move(patches));
  Tensor y = linear(x, params.weight, params.bias).reshape({clip.T, h, w, d});
  PatchGrid grid{y, (clip.valid_h + p - 1) / p, (clip.valid_w + p - 1) / p};
  if (grid.valid_h < h || grid.valid_w < w) {
    auto mask = grid.token_mask();
    grid.data = mask_rows(grid.data, mask);
  }
  return grid;
}

}  // namespace stvl
