// SPDX-License-Identifier: Apache-2.0
//
// Cost accounting for the visual path (everything before the LM): exact
// parameter counts, an analytic FLOP estimate per clip, and wall-clock
// latency. One multiply-accumulate is two FLOPs.
//
// Closed forms, with P = 3p^2, b = d/r, grid h = H/p, w = W/p,
// N = T*h*w tokens, N' = N/4 after downsampling, Qh*Qw = (H_max/2p)(W_max/2p)
// and M = T*(1 + (h/2)*(w/2 + 1)) sequence tokens:
//
//   params                                   multiply-accumulates
//   patch_embed  P*d + d                     N*P*d
//   lste         2*d*b + 3*b^2 + 2*b + 29*d  N*(2*d*b + 3*b^2 + 27*d)
//   lsd          Qh*Qw*d + 3*d^2             Qh*Qw*d^2 + 2*N*d^2 + 2*N*d
//   fsra         T_max*d + 3*d^2             T_max*d^2 + 2*N'*d^2 + 2*N'*d
//   gstra        d + 3*d^2                   d^2 + 2*N'*d^2 + 2*N'*d
//   fusion       d^2 + 2*d                   T*d^2 + T*d
//   sequencer    d + d*m + m + m*d_lm + d_lm M*(d*m + m*d_lm),  m = d_mlp
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stvl/config.hpp"
#include "stvl/model.hpp"

namespace stvl {

using ModuleCounts = std::vector<std::pair<std::string, std::int64_t>>;

inline const std::vector<std::string>& visual_modules() {
  static const std::vector<std::string> m = {"patch_embed", "lste", "lsd", "fsra", "gstra", "fusion", "sequencer"};
  return m;
}

// Sum of tensor element counts per visual module, read from the model.
ModuleCounts count_params(const VideoLanguageModel& model);
// The same counts from the closed forms above.
ModuleCounts closed_form_params(const ModelConfig& cfg);
std::int64_t total(const ModuleCounts& counts);

// Analytic FLOPs of one forward pass of the full visual path on a clip of
// `frames` frames at H_max x W_max (frames <= 0 means T_max).
ModuleCounts estimate_flops(const ModelConfig& cfg, int frames = 0);

// Multiply-accumulates counted while encoding `clip`.
std::int64_t instrumented_macs(const VideoLanguageModel& model, const VideoClip& clip);

struct LatencyStats {
  int runs = 0;
  int warmups = 0;
  double median_ms = 0.0;
  double p90_ms = 0.0;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::vector<double> samples_ms;
};

// Times model.encode on `clip` without gradient recording. Needs k_runs >= 5
// and warmups >= 2.
LatencyStats measure_latency(const VideoLanguageModel& model, const VideoClip& clip, int k_runs, int warmups = 2);

struct CostReport {
  ModelConfig config;
  std::uint64_t config_hash = 0;
  int frames = 0, height = 0, width = 0;
  ModuleCounts params;
  std::int64_t params_total = 0;
  std::int64_t lm_params = 0;  // reported alongside, not part of params_total
  ModuleCounts flops;
  std::int64_t flops_total = 0;
  bool has_latency = false;
  LatencyStats latency;

  std::string table() const;
  KeyValueFile to_kv() const;
};

// Builds the model for `cfg`, counts, estimates and (when k_runs > 0) times
// a random clip of T_max frames at H_max x W_max.
CostReport profile(const ModelConfig& cfg, int k_runs, std::uint64_t clip_seed = 0);

}  // namespace stvl
