// SPDX-License-Identifier: Apache-2.0
#include "stvl/teacher.hpp"

#include <cmath>

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"

namespace stvl {

TeacherMode parse_teacher_mode(const std::string& name) {
  if (name == "linear_probe") return TeacherMode::linear_probe;
  if (name == "frozen_random") return TeacherMode::frozen_random;
  throw ConfigError("unknown teacher mode '" + name + "'");
}

std::string teacher_mode_name(TeacherMode m) {
  return m == TeacherMode::linear_probe ? "linear_probe" : "frozen_random";
}

TeacherStub TeacherStub::make(const ModelConfig& cfg, TeacherMode mode, std::uint64_t seed, bool zero_bias) {
  TeacherStub t;
  t.mode_ = mode;
  t.p_ = cfg.p;
  const Index pd = 3 * cfg.p * cfg.p;
  const Index in = mode == TeacherMode::linear_probe ? pd : 4 * pd;
  Rng rng(Rng::derive(seed, 0x7eac4e2));
  const double g = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(static_cast<std::size_t>(in * cfg.d_lm));
  for (auto& x : w) x = rng.uniform(-g, g);
  std::vector<double> b(static_cast<std::size_t>(cfg.d_lm), 0.0);
  if (!zero_bias)
    for (auto& x : b) x = rng.uniform(-0.1, 0.1);
  t.weight_ = Tensor::from({in, cfg.d_lm}, std::move(w));
  t.bias_ = Tensor::from({cfg.d_lm}, std::move(b));
  return t;
}

Tensor TeacherStub::tokens(const VideoClip& clip, const SequenceLayout& layout) const {
  const int p = p_;
  const VideoClip padded = pad_to_multiple(clip, 2 * p);
  const auto patches = extract_patches(padded, p);
  const int h = padded.H / p, w = padded.W / p;
  const Index pd = 3 * p * p;
  const bool concat = mode_ == TeacherMode::frozen_random;
  const Index in = concat ? 4 * pd : pd;
  if (layout.frames > clip.T || 2 * layout.rows > h || 2 * layout.cols > w)
    throw ShapeError("teacher: layout does not fit the clip");

  auto patch = [&](int t, int i, int j) { return patches.data() + ((static_cast<Index>(t) * h + i) * w + j) * pd; };
  auto window_feature = [&](int t, int i, int j, double* dst) {
    for (int k = 0; k < 4; ++k) {
      const double* src = patch(t, 2 * i + k / 2, 2 * j + k % 2);
      for (Index c = 0; c < pd; ++c) {
        if (concat) dst[k * pd + c] = src[c];
        else dst[c] += 0.25 * src[c];
      }
    }
  };

  // Window features for every real window, frame means, and the clip mean.
  const int rows = (padded.valid_h + 2 * p - 1) / (2 * p), cols = (padded.valid_w + 2 * p - 1) / (2 * p);
  std::vector<double> win(static_cast<std::size_t>(clip.T) * rows * cols * in, 0.0);
  std::vector<double> frame_mean(static_cast<std::size_t>(clip.T) * in, 0.0);
  std::vector<double> clip_mean(static_cast<std::size_t>(in), 0.0);
  for (int t = 0; t < clip.T; ++t)
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        double* f = win.data() + ((static_cast<Index>(t) * rows + i) * cols + j) * in;
        window_feature(t, i, j, f);
        for (Index c = 0; c < in; ++c) {
          frame_mean[t * in + c] += f[c] / (rows * cols);
          clip_mean[c] += f[c] / (static_cast<double>(rows) * cols * clip.T);
        }
      }

  std::vector<double> feats(layout.size() * static_cast<std::size_t>(in));
  for (std::size_t k = 0; k < layout.size(); ++k) {
    const auto& tok = layout.tokens[k];
    const double* src = nullptr;
    switch (tok.role) {
      case TokenRole::context: src = frame_mean.data() + tok.frame * in; break;
      case TokenRole::row_split: src = clip_mean.data(); break;
      case TokenRole::spatial:
        if (tok.row >= rows || tok.col >= cols) throw ShapeError("teacher: spatial token outside the valid region");
        src = win.data() + ((static_cast<Index>(tok.frame) * rows + tok.row) * cols + tok.col) * in;
        break;
    }
    std::copy_n(src, in, feats.begin() + static_cast<Index>(k) * in);
  }
  NoGradGuard no_grad;
  Tensor out = linear(Tensor::from({static_cast<Index>(layout.size()), in}, std::move(feats)), weight_, bias_);
  if (concat) out = stvl::tanh(out);
  return out;
}

}  // namespace stvl
