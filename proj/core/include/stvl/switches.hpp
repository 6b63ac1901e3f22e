// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace stvl {

enum class Downsampling { lsd, avg_pool, half_resolution, resampler };
enum class DistillKind { cosine, mse, none };

// Ablation and variant switches. Parsed from a comma-separated list of the
// exact names in Switches::names(); the empty list is the full model.
struct Switches {
  Downsampling downsampling = Downsampling::lsd;
  bool lsd_before_lste = false;
  bool no_lste = false;
  bool no_fsra = false;
  bool no_gstra = false;
  bool gstra_pre_lsd = false;
  bool no_row = false;
  DistillKind distill = DistillKind::cosine;
  bool distill_spatial_only = false;

  static Switches parse(std::string_view list);
  static const std::vector<std::string>& names();
  // Canonical comma-separated form listing only non-default switches.
  std::string to_string() const;

  bool operator==(const Switches&) const = default;
};

}  // namespace stvl
