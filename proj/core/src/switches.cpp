// SPDX-License-Identifier: Apache-2.0
#include "stvl/switches.hpp"

#include "stvl/errors.hpp"

namespace stvl {

const std::vector<std::string>& Switches::names() {
  static const std::vector<std::string> n = {
      "lsd",     "avg_pool", "half_resolution", "resampler", "lsd_after_lste", "lsd_before_lste",
      "no_lste", "no_fsra",  "no_gstra",        "gstra_pre_lsd", "no_row",       "cosine",
      "mse",     "no_distill", "distill_spatial_only"};
  return n;
}

Switches Switches::parse(std::string_view list) {
  Switches s;
  bool downsampling_set = false, distill_set = false;
  auto set_down = [&](Downsampling d, std::string_view name) {
    if (downsampling_set && s.downsampling != d)
      throw ConfigError("conflicting downsampling switches (second: " + std::string(name) + ")");
    s.downsampling = d;
    downsampling_set = true;
  };
  auto set_distill = [&](DistillKind k, std::string_view name) {
    if (distill_set && s.distill != k) throw ConfigError("conflicting distillation switches (second: " + std::string(name) + ")");
    s.distill = k;
    distill_set = true;
  };
  while (!list.empty()) {
    const auto comma = list.find(',');
    std::string_view name = list.substr(0, comma);
    list = comma == std::string_view::npos ? std::string_view() : list.substr(comma + 1);
    while (!name.empty() && name.front() == ' ') name.remove_prefix(1);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    if (name.empty()) continue;
    if (name == "lsd") set_down(Downsampling::lsd, name);
    else if (name == "avg_pool") set_down(Downsampling::avg_pool, name);
    else if (name == "half_resolution") set_down(Downsampling::half_resolution, name);
    else if (name == "resampler") set_down(Downsampling::resampler, name);
    else if (name == "lsd_after_lste") s.lsd_before_lste = false;
    else if (name == "lsd_before_lste") s.lsd_before_lste = true;
    else if (name == "no_lste") s.no_lste = true;
    else if (name == "no_fsra") s.no_fsra = true;
    else if (name == "no_gstra") s.no_gstra = true;
    else if (name == "gstra_pre_lsd") s.gstra_pre_lsd = true;
    else if (name == "no_row") s.no_row = true;
    else if (name == "cosine") set_distill(DistillKind::cosine, name);
    else if (name == "mse") set_distill(DistillKind::mse, name);
    else if (name == "no_distill") set_distill(DistillKind::none, name);
    else if (name == "distill_spatial_only") s.distill_spatial_only = true;
    else throw ConfigError("unknown ablation switch '" + std::string(name) + "'");
  }
  return s;
}

std::string Switches::to_string() const {
  std::vector<std::string> on;
  switch (downsampling) {
    case Downsampling::lsd: break;
    case Downsampling::avg_pool: on.push_back("avg_pool"); break;
    case Downsampling::half_resolution: on.push_back("half_resolution"); break;
    case Downsampling::resampler: on.push_back("resampler"); break;
  }
  if (lsd_before_lste) on.push_back("lsd_before_lste");
  if (no_lste) on.push_back("no_lste");
  if (no_fsra) on.push_back("no_fsra");
  if (no_gstra) on.push_back("no_gstra");
  if (gstra_pre_lsd) on.push_back("gstra_pre_lsd");
  if (no_row) on.push_back("no_row");
  if (distill == DistillKind::mse) on.push_back("mse");
  if (distill == DistillKind::none) on.push_back("no_distill");
  if (distill_spatial_only) on.push_back("distill_spatial_only");
  std::string out;
  for (const auto& n : on) out += (out.empty() ? "" : ",") + n;
  return out;
}

}  // namespace stvl
