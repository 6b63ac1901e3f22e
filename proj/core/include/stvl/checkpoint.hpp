// SPDX-License-Identifier: Apache-2.0
//
// On-disk model snapshot. A checkpoint is a directory holding
//   manifest.tsv  name, module, shape, frozen flag, element offset per tensor
//   params.bin    every tensor's values as little-endian float64, in manifest order
//   state.kv      model config, switches, teacher mode, completed stage, RNG state
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "stvl/config.hpp"
#include "stvl/model.hpp"
#include "stvl/rng.hpp"
#include "stvl/switches.hpp"
#include "stvl/teacher.hpp"

namespace stvl {

struct CheckpointTensor {
  std::string name;
  std::string module;
  Shape shape;
  bool frozen = false;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  Switches switches;
  TeacherMode teacher = TeacherMode::linear_probe;
  int stage = 0;  // last completed stage, 0 for an initial snapshot
  std::string rng_state;
  std::vector<CheckpointTensor> tensors;

  static Checkpoint capture(const VideoLanguageModel& model, int stage, const Rng& rng,
                            TeacherMode teacher = TeacherMode::linear_probe);
  // Builds a model with the stored config and switches and loads the values.
  VideoLanguageModel restore() const;
  // Copies values and frozen flags into an existing model; names and shapes must match.
  void apply(VideoLanguageModel& model) const;
  Rng rng() const;

  void save(const std::filesystem::path& dir) const;
  static Checkpoint load(const std::filesystem::path& dir);
};

}  // namespace stvl
