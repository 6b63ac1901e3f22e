// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "stvl/config.hpp"

namespace stvl::cli {

// Record of one artifact-producing command, saved as JSON when it finishes.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  KeyValueFile config;
  std::string switches;
  std::vector<std::string> outputs;

  void start(std::string cmd, int argc, char** argv_in);
  // Stamps the finish time and writes via a temporary file plus rename.
  void save(const std::filesystem::path& path);
};

std::string utc_timestamp();
const char* git_describe();

}  // namespace stvl::cli
