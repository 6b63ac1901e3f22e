// SPDX-License-Identifier: Apache-2.0
//
// Synthetic video question answering data and its on-disk formats.
//
// Dataset directory:
//   clips/{id}.stvb   one ClipFile per sample
//   samples.tsv       id, task, question ids, answer ids (ids space separated)
//   vocab.txt         one token per line, line number = id
//
// ClipFile (all integers little-endian):
//   "STVB" | u16 version=1 | u16 T | u16 H | u16 W | u16 dtype (1 = float32)
//   followed by T*H*W*3 float32 values in [T, H, W, 3] row-major order.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "stvl/lm.hpp"
#include "stvl/video.hpp"

namespace stvl {

enum class Task { color, count, direction, order };

std::string task_name(Task t);
Task parse_task(std::string_view name);                  // ConfigError names the bad task
std::vector<Task> parse_tasks(std::string_view comma_list);
const std::vector<Task>& all_tasks();

struct SyntheticSample {
  std::string id;
  Task task = Task::color;
  VideoClip clip;
  std::vector<int> question;
  std::vector<int> answer;  // answer word followed by <eos>
};

struct GeneratorOptions {
  int frames = 8;
  int size = 32;
  double noise = 0.05;  // background noise amplitude
};

// Sample `index` of a dataset with seed `seed`; depends on nothing else.
SyntheticSample generate_sample(Task task, std::uint64_t seed, std::size_t index, const Vocabulary& vocab,
                                const GeneratorOptions& opts = {});
// Tasks are assigned round-robin in the given order.
std::vector<SyntheticSample> generate_samples(std::size_t n, const std::vector<Task>& tasks, std::uint64_t seed,
                                              const Vocabulary& vocab, const GeneratorOptions& opts = {});
void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                   const Vocabulary& vocab);
void generate_dataset(const std::filesystem::path& dir, std::size_t n, const std::vector<Task>& tasks,
                      std::uint64_t seed, const GeneratorOptions& opts = {});

struct Dataset {
  Vocabulary vocab;
  std::vector<SyntheticSample> samples;
};
Dataset load_dataset(const std::filesystem::path& dir);

void write_clip(const std::filesystem::path& path, const VideoClip& clip);
VideoClip read_clip(const std::filesystem::path& path);

// round(linspace(0, T-1, target)) with halves rounded up; repeats frames when
// the clip is shorter than target.
std::vector<int> sample_frame_indices(int frames, int target);
VideoClip sample_frames(const VideoClip& clip, int target = 8);

// Rule-based answer word recovered from pixels alone.
std::string label_clip(Task task, const VideoClip& clip);

}  // namespace stvl
