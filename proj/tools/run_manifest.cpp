// SPDX-License-Identifier: Apache-2.0
#include "run_manifest.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include "json.hpp"
#include "stvl/errors.hpp"

namespace stvl::cli {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char date[32];
  std::strftime(date, sizeof date, "%Y-%m-%dT%H:%M:%S", &tm);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%s.%03dZ", date, static_cast<int>(ms));
  return buf;
}

const char* git_describe() { return STVL_GIT_DESCRIBE; }

void RunManifest::start(std::string cmd, int argc, char** argv_in) {
  command = std::move(cmd);
  argv.assign(argv_in, argv_in + argc);
  started_at = utc_timestamp();
}

void RunManifest::save(const std::filesystem::path& path) {
  finished_at = utc_timestamp();
  nlohmann::ordered_json j;
  j["command"] = command;
  j["argv"] = argv;
  j["seed"] = seed;
  j["git_describe"] = git_describe();
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  j["switches"] = switches;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config.entries()) cfg[k] = v;
  j["config"] = cfg;
  j["outputs"] = outputs;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace stvl::cli
