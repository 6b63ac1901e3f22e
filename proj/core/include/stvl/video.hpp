// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "stvl/config.hpp"
#include "stvl/rng.hpp"
#include "stvl/tensor.hpp"

namespace stvl {

// Raw frames [T, H, W, 3], intensities in [0, 1]. Content occupies the
// top-left valid_h x valid_w region; anything beyond is padding.
struct VideoClip {
  int T = 0, H = 0, W = 0;
  int valid_h = 0, valid_w = 0;
  std::vector<double> pixels;

  static VideoClip zeros(int T, int H, int W);

  double& at(int t, int y, int x, int c) { return pixels[index(t, y, x, c)]; }
  double at(int t, int y, int x, int c) const { return pixels[index(t, y, x, c)]; }
  std::size_t index(int t, int y, int x, int c) const {
    return ((static_cast<std::size_t>(t) * H + y) * W + x) * 3 + c;
  }
  std::size_t frame_size() const { return static_cast<std::size_t>(H) * W * 3; }

  // Checks size, finiteness, and the limits of cfg.
  void validate(const ModelConfig& cfg) const;
};

// Pads bottom/right to (H, W) with `fill`; valid extent unchanged.
VideoClip pad_clip(const VideoClip& clip, int H, int W, double fill = 0.0);
// Pads to the next multiple of `multiple` on each spatial side.
VideoClip pad_to_multiple(const VideoClip& clip, int multiple);
// 2x decimation by 2x2 box averaging (bilinear at exactly half scale).
VideoClip half_resolution(const VideoClip& clip);
// Keeps the listed frames in the listed order.
VideoClip select_frames(const VideoClip& clip, const std::vector<int>& frames);

// Per-frame token grid [T, h, w, d] plus the count of non-padded patch rows
// and columns (identical for every frame).
struct PatchGrid {
  Tensor data;
  int valid_h = 0, valid_w = 0;

  int T() const { return static_cast<int>(data.dim(0)); }
  int h() const { return static_cast<int>(data.dim(1)); }
  int w() const { return static_cast<int>(data.dim(2)); }
  int d() const { return static_cast<int>(data.dim(3)); }
  bool valid(int i, int j) const { return i < valid_h && j < valid_w; }
  // One byte per token in [T, h, w] order: 1 = real content.
  std::vector<unsigned char> token_mask() const;
  Index token(int t, int i, int j) const { return (static_cast<Index>(t) * h() + i) * w() + j; }
};

struct PatchEmbedParams {
  Tensor weight;  // [3p^2, d]
  Tensor bias;    // [d]

  static PatchEmbedParams init(const ModelConfig& cfg, Rng& rng);
};

// Flattened patches [T*h*w, 3p^2] in (y, x, channel) order within each
// patch; pixels outside the valid extent read as zero.
std::vector<double> extract_patches(const VideoClip& clip, int p);

// Linear patch embedding. Padded tokens are zeroed so downstream
// convolutions see the same neighbourhood as an unpadded clip.
PatchGrid patchify(const VideoClip& clip, const PatchEmbedParams& params, int p);

}  // namespace stvl
