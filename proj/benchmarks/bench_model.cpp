// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include "stvl/trainer.hpp"

namespace {

using namespace stvl;

VideoClip noise_clip(int T, int H, int W, std::uint64_t seed) {
  Rng rng(seed);
  auto c = VideoClip::zeros(T, H, W);
  for (auto& v : c.pixels) v = rng.uniform();
  return c;
}

// Visual encoding of one toy clip, varying the frame count.
void BM_Encode(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const VideoLanguageModel m(cfg);
  const auto clip = noise_clip(static_cast<int>(state.range(0)), cfg.H_max, cfg.W_max, 1);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(clip).tokens);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Encode)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_EncodeAblation(benchmark::State& state, const char* switches) {
  const auto cfg = ModelConfig::toy();
  const VideoLanguageModel m(cfg, Switches::parse(switches));
  const auto clip = noise_clip(cfg.T_max, cfg.H_max, cfg.W_max, 2);
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(m.encode(clip).tokens);
}
BENCHMARK_CAPTURE(BM_EncodeAblation, avg_pool, "avg_pool")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_EncodeAblation, half_resolution, "half_resolution")->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_EncodeAblation, no_lste, "no_lste")->Unit(benchmark::kMillisecond);

// Full forward (visual path plus LM) on a short prompt.
void BM_Forward(benchmark::State& state) {
  const auto cfg = ModelConfig::toy();
  const VideoLanguageModel m(cfg);
  const auto clip = noise_clip(cfg.T_max, cfg.H_max, cfg.W_max, 3);
  const std::vector<int> text = {1, 2, 3, 4, 5, 6};
  NoGradGuard ng;
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(clip, text).next_logits);
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

// One optimizer step over a batch of synthetic samples.
void BM_TrainStep(benchmark::State& state) {
  const auto vocab = Vocabulary::synthetic();
  auto cfg = ModelConfig::toy();
  cfg.vocab_size = vocab.size();
  VideoLanguageModel m(cfg);
  const auto teacher = TeacherStub::make(cfg, TeacherMode::linear_probe, cfg.seed);
  StageConfig sc = StageConfig::defaults(2);
  sc.batch_size = static_cast<int>(state.range(0));
  const auto data = generate_samples(static_cast<std::size_t>(sc.batch_size), all_tasks(), 7, vocab);
  Rng rng(7);
  for (auto _ : state) benchmark::DoNotOptimize(run_stage(sc, m, teacher, data, rng).steps.size());
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
