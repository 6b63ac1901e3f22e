// SPDX-License-Identifier: Apache-2.0
//
// Deterministic stand-in for a pretrained video teacher. Emits one target
// per visual position of a SequenceLayout. Spatial position (f, i, j) reads
// the 2p x 2p pixel window that LSD folds into that token; context positions
// read their frame, <row> positions the whole clip. The weights are plain
// tensors and never receive gradient.
#pragma once

#include <cstdint>
#include <string>

#include "stvl/config.hpp"
#include "stvl/sequencer.hpp"
#include "stvl/video.hpp"

namespace stvl {

enum class TeacherMode {
  // Mean of the window's four patches through a random linear map.
  linear_probe,
  // The four patches concatenated through a random linear map, then tanh.
  frozen_random,
};

TeacherMode parse_teacher_mode(const std::string& name);
std::string teacher_mode_name(TeacherMode m);

class TeacherStub {
 public:
  static TeacherStub make(const ModelConfig& cfg, TeacherMode mode, std::uint64_t seed, bool zero_bias = false);

  // [layout.size(), d_lm]
  Tensor tokens(const VideoClip& clip, const SequenceLayout& layout) const;

  TeacherMode mode() const { return mode_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  TeacherMode mode_ = TeacherMode::linear_probe;
  int p_ = 1;
  Tensor weight_;  // [3p^2, d_lm] or [12p^2, d_lm]
  Tensor bias_;    // [d_lm]
};

}  // namespace stvl
