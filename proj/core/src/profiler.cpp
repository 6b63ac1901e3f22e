// SPDX-License-Identifier: Apache-2.0
#include "stvl/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#ifdef __linux__
#include <sched.h>
#endif

#include "stvl/errors.hpp"

namespace stvl {

namespace {

// Restricts the calling thread to the CPU it is on; restores on scope exit.
class PinToCurrentCpu {
 public:
  PinToCurrentCpu() {
#ifdef __linux__
    if (sched_getaffinity(0, sizeof(saved_), &saved_) != 0) return;
    const int cpu = sched_getcpu();
    if (cpu < 0) return;
    cpu_set_t one;
    CPU_ZERO(&one);
    CPU_SET(cpu, &one);
    pinned_ = sched_setaffinity(0, sizeof(one), &one) == 0;
#endif
  }
  ~PinToCurrentCpu() {
#ifdef __linux__
    if (pinned_) sched_setaffinity(0, sizeof(saved_), &saved_);
#endif
  }
  PinToCurrentCpu(const PinToCurrentCpu&) = delete;
  PinToCurrentCpu& operator=(const PinToCurrentCpu&) = delete;

 private:
#ifdef __linux__
  cpu_set_t saved_{};
#endif
  bool pinned_ = false;
};

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

ModuleCounts count_params(const VideoLanguageModel& model) {
  std::map<std::string, std::int64_t> by_module;
  for (const auto& e : model.params().entries()) by_module[e.module] += e.tensor.numel();
  ModuleCounts out;
  for (const auto& m : visual_modules()) out.emplace_back(m, by_module[m]);
  return out;
}

ModuleCounts closed_form_params(const ModelConfig& cfg) {
  const std::int64_t P = 3LL * cfg.p * cfg.p, d = cfg.d, b = cfg.bottleneck(), m = cfg.d_mlp, dl = cfg.d_lm;
  const std::int64_t q = static_cast<std::int64_t>(cfg.grid_h() / 2) * (cfg.grid_w() / 2);
  return {{"patch_embed", P * d + d},
          {"lste", 2 * d * b + 3 * b * b + 2 * b + 29 * d},
          {"lsd", q * d + 3 * d * d},
          {"fsra", static_cast<std::int64_t>(cfg.T_max) * d + 3 * d * d},
          {"gstra", d + 3 * d * d},
          {"fusion", d * d + 2 * d},
          {"sequencer", d + d * m + m + m * dl + dl}};
}

std::int64_t total(const ModuleCounts& counts) {
  std::int64_t n = 0;
  for (const auto& [name, v] : counts) n += v;
  return n;
}

ModuleCounts estimate_flops(const ModelConfig& cfg, int frames) {
  cfg.validate();
  const std::int64_t T = frames > 0 ? frames : cfg.T_max;
  const std::int64_t P = 3LL * cfg.p * cfg.p, d = cfg.d, b = cfg.bottleneck(), m = cfg.d_mlp, dl = cfg.d_lm;
  const std::int64_t h = cfg.grid_h(), w = cfg.grid_w();
  const std::int64_t N = T * h * w, Nd = T * (h / 2) * (w / 2);
  const std::int64_t q = (h / 2) * (w / 2);
  const std::int64_t M = T * (1 + (h / 2) * (w / 2 + 1));
  const ModuleCounts macs = {{"patch_embed", N * P * d},
                             {"lste", N * (2 * d * b + 3 * b * b + 27 * d)},
                             {"lsd", q * d * d + 2 * N * d * d + 2 * N * d},
                             {"fsra", cfg.T_max * d * d + 2 * Nd * d * d + 2 * Nd * d},
                             {"gstra", d * d + 2 * Nd * d * d + 2 * Nd * d},
                             {"fusion", T * d * d + T * d},
                             {"sequencer", M * (d * m + m * dl)}};
  ModuleCounts flops;
  for (const auto& [name, v] : macs) flops.emplace_back(name, 2 * v);
  return flops;
}

std::int64_t instrumented_macs(const VideoLanguageModel& model, const VideoClip& clip) {
  NoGradGuard no_grad;
  MacCounter counter;
  model.encode(clip);
  return static_cast<std::int64_t>(counter.macs());
}

LatencyStats measure_latency(const VideoLanguageModel& model, const VideoClip& clip, int k_runs, int warmups) {
  if (k_runs < 5) throw ConfigError("measure_latency needs at least 5 timed runs");
  if (warmups < 2) throw ConfigError("measure_latency needs at least 2 warmup runs");
  PinToCurrentCpu pin;
  NoGradGuard no_grad;
  for (int i = 0; i < warmups; ++i) model.encode(clip);
  LatencyStats s;
  s.runs = k_runs;
  s.warmups = warmups;
  for (int i = 0; i < k_runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto out = model.encode(clip);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.size() == 0) throw ShapeError("measure_latency: empty token sequence");
    s.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  s.median_ms = quantile(s.samples_ms, 0.5);
  s.p90_ms = quantile(s.samples_ms, 0.9);
  s.mean_ms = std::accumulate(s.samples_ms.begin(), s.samples_ms.end(), 0.0) / k_runs;
  double var = 0.0;
  for (double x : s.samples_ms) var += (x - s.mean_ms) * (x - s.mean_ms);
  s.stddev_ms = std::sqrt(var / (k_runs - 1));
  return s;
}

std::string CostReport::table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "config hash %016llx, clip %dx%dx%d (T x H x W), FLOPs per clip\n",
                static_cast<unsigned long long>(config_hash), frames, height, width);
  os << line;
  std::snprintf(line, sizeof line, "%-12s %14s %18s\n", "module", "params", "FLOPs");
  os << line;
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::snprintf(line, sizeof line, "%-12s %14lld %18lld\n", params[i].first.c_str(),
                  static_cast<long long>(params[i].second), static_cast<long long>(flops[i].second));
    os << line;
  }
  std::snprintf(line, sizeof line, "%-12s %14lld %18lld\n", "total", static_cast<long long>(params_total),
                static_cast<long long>(flops_total));
  os << line;
  std::snprintf(line, sizeof line, "%-12s %14lld   (not in total)\n", "lm", static_cast<long long>(lm_params));
  os << line;
  if (has_latency) {
    std::snprintf(line, sizeof line, "latency      median %.3f ms, p90 %.3f ms, mean %.3f ms, sd %.3f ms (%d runs, %d warmups)\n",
                  latency.median_ms, latency.p90_ms, latency.mean_ms, latency.stddev_ms, latency.runs,
                  latency.warmups);
    os << line;
  }
  return os.str();
}

KeyValueFile CostReport::to_kv() const {
  KeyValueFile kv;
  char hash[24];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
  kv.set("config_hash", hash);
  const KeyValueFile cfg_kv = config.to_kv();
  for (const auto& [k, v] : cfg_kv.entries()) kv.set("config." + k, v);
  kv.set("clip_frames", std::to_string(frames));
  kv.set("clip_height", std::to_string(height));
  kv.set("clip_width", std::to_string(width));
  kv.set("flops_basis", "per_clip");
  for (const auto& [m, v] : params) kv.set("params." + m, std::to_string(v));
  kv.set("params_total", std::to_string(params_total));
  kv.set("params_lm", std::to_string(lm_params));
  for (const auto& [m, v] : flops) kv.set("flops." + m, std::to_string(v));
  kv.set("flops_forward", std::to_string(flops_total));
  if (has_latency) {
    auto num = [](double x) {
      char b[32];
      std::snprintf(b, sizeof b, "%.6f", x);
      return std::string(b);
    };
    kv.set("latency_runs", std::to_string(latency.runs));
    kv.set("latency_warmups", std::to_string(latency.warmups));
    kv.set("latency_ms_median", num(latency.median_ms));
    kv.set("latency_ms_p90", num(latency.p90_ms));
    kv.set("latency_ms_mean", num(latency.mean_ms));
    kv.set("latency_ms_stddev", num(latency.stddev_ms));
  }
  return kv;
}

CostReport profile(const ModelConfig& cfg, int k_runs, std::uint64_t clip_seed) {
  const VideoLanguageModel model(cfg);
  CostReport r;
  r.config = cfg;
  r.config_hash = config_hash(cfg);
  r.frames = cfg.T_max;
  r.height = cfg.H_max;
  r.width = cfg.W_max;
  r.params = count_params(model);
  r.params_total = total(r.params);
  for (const auto& e : model.params().entries())
    if (e.module == "lm") r.lm_params += e.tensor.numel();
  r.flops = estimate_flops(cfg);
  r.flops_total = total(r.flops);
  if (k_runs > 0) {
    VideoClip clip = VideoClip::zeros(cfg.T_max, cfg.H_max, cfg.W_max);
    Rng rng(clip_seed);
    for (auto& v : clip.pixels) v = rng.uniform();
    r.latency = measure_latency(model, clip, k_runs);
    r.has_latency = true;
  }
  return r;
}

}  // namespace stvl
