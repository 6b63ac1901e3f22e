// SPDX-License-Identifier: Apache-2.0
//
// Three-stage training: stage 1 trains the visual path against a frozen LM,
// stage 2 trains everything, stage 3 fine-tunes on answers only. Each stage
// is one seeded shuffled pass (or `epochs` passes) with AdamW, linear warmup,
// cosine decay to zero and global-norm gradient clipping.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stvl/checkpoint.hpp"
#include "stvl/config.hpp"
#include "stvl/data.hpp"
#include "stvl/model.hpp"
#include "stvl/rng.hpp"
#include "stvl/teacher.hpp"

namespace stvl {

struct StageConfig {
  int stage = 1;
  int batch_size = 8;
  double lr = 4e-4;
  double warmup_ratio = 0.03;
  double weight_decay = 0.0;
  int epochs = 1;
  bool freeze_lm = true;
  bool distill = true;       // add the distillation term
  bool answer_only = false;  // text loss on answer tokens only
  double distill_weight = 1.0;
  double clip_norm = 1.0;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  static StageConfig defaults(int stage);
  // Reads `stage<N>.<field>` keys, then unprefixed `<field>` keys as a
  // fallback, over the stage defaults.
  static StageConfig from_kv(int stage, const KeyValueFile& kv);
  static const std::vector<std::string>& keys();
  void validate() const;
  void to_kv(KeyValueFile& kv) const;  // writes `stage<N>.` keys
};

struct LossParts {
  Tensor total;
  double text = 0.0;
  double distill = 0.0;
};

// Loss of one sample: text cross-entropy plus the weighted distillation term
// when enabled by both the stage and the model's switches.
LossParts sample_loss(const VideoLanguageModel& model, const TeacherStub& teacher, const SyntheticSample& sample,
                      const StageConfig& cfg);

// Linear warmup reaching peak on the last warmup step (peak/W at step 0), then
// cosine decay from peak to 0 at the last step.
double learning_rate(int step, int total_steps, double peak, double warmup_ratio);
int warmup_steps(int total_steps, double warmup_ratio);

class AdamW {
 public:
  AdamW(const ParamStore& store, double beta1, double beta2, double eps, double weight_decay);
  // Updates every non-frozen entry from its accumulated gradient.
  void step(ParamStore& store, double lr);
  int steps_taken() const { return t_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  int t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Global L2 norm over the gradients of non-frozen entries.
double grad_norm(const ParamStore& store);
// Rescales those gradients so the norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(ParamStore& store, double max_norm);

struct StepRecord {
  int stage = 0;
  int step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double text_loss = 0.0;
  double distill_loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainReport {
  int stage = 0;
  std::size_t samples = 0;
  std::vector<StepRecord> steps;
};

using StepCallback = std::function<void(const StepRecord&)>;

// Throws NumericalError on a non-finite loss or gradient.
TrainReport run_stage(const StageConfig& cfg, VideoLanguageModel& model, const TeacherStub& teacher,
                      std::span<const SyntheticSample> data, Rng& rng, const StepCallback& on_step = {});

// Sets the freeze flags a stage requires: LM frozen in stage 1 only.
void apply_freeze_schedule(VideoLanguageModel& model, const StageConfig& cfg);

// Deterministic subset of floor(n/2) sample indices, ascending.
std::vector<std::size_t> half_subset(std::size_t n, std::uint64_t seed);

void write_loss_log(const std::filesystem::path& path, const TrainReport& report);

struct PipelineConfig {
  ModelConfig model;
  Switches switches;
  TeacherMode teacher = TeacherMode::linear_probe;
  std::array<StageConfig, 3> stages = {StageConfig::defaults(1), StageConfig::defaults(2), StageConfig::defaults(3)};
  int first_stage = 1;
  int last_stage = 3;
  // Stage 1 trains on half of the stage-2 set when no stage-1 set is given.
  bool stage1_half = true;
  std::filesystem::path out_dir;  // empty: no files written
};

struct PipelineData {
  std::vector<SyntheticSample> stage1;  // optional
  std::vector<SyntheticSample> stage2;
  std::vector<SyntheticSample> stage3;
};

struct PipelineResult {
  std::vector<TrainReport> reports;
  std::vector<std::filesystem::path> checkpoints;
  Checkpoint final_checkpoint;
};

// Runs stages first_stage..last_stage. Starting past stage 1 needs the
// checkpoint of the preceding stage; its RNG state continues the run.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineData& data, const Checkpoint* resume = nullptr,
                            const StepCallback& on_step = {});

struct TaskMetrics {
  Task task = Task::color;
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
};

struct EvalResult {
  std::vector<TaskMetrics> per_task;  // tasks present in the data, in all_tasks() order
  std::size_t count = 0;
  std::size_t correct = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / count : 0.0; }
  const TaskMetrics* find(Task t) const;
};

// Greedy decoding from the question; a sample counts as correct when the
// generated ids equal its answer ids exactly (answer word then <eos>).
EvalResult evaluate(const VideoLanguageModel& model, std::span<const SyntheticSample> data, int eos);

}  // namespace stvl
