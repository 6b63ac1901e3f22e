// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace stvl {

// Flat key=value document. Blank lines and lines starting with '#' are
// ignored; keys keep file order on write.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::string_view text);
  static KeyValueFile load(const std::filesystem::path& path);

  void set(const std::string& key, std::string value);
  bool contains(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct ModelConfig {
  int T_max = 8;
  int H_max = 448;
  int W_max = 448;
  int p = 14;
  int d = 64;
  int r = 4;
  int d_lm = 64;
  int vocab_size = 64;
  std::uint64_t seed = 0;

  // Not named by the model description but needed to build the toy stack.
  int d_mlp = 64;
  int lm_layers = 2;
  int lm_heads = 4;
  int lm_context = 512;
  int lm_ff_mult = 4;
  bool lste_activation = false;

  // 32x32 frames with 4-pixel patches: the desk-scale default.
  static ModelConfig toy();

  int grid_h() const { return H_max / p; }
  int grid_w() const { return W_max / p; }
  int bottleneck() const { return d / r; }

  void validate() const;

  KeyValueFile to_kv() const;
  // Reads known keys and leaves everything else alone; missing keys keep defaults.
  static ModelConfig from_kv(const KeyValueFile& kv);
  static const std::set<std::string>& keys();

  std::string to_string() const { return to_kv().to_string(); }
  bool operator==(const ModelConfig&) const = default;
};

// 64-bit FNV-1a over the serialized text; used to tag reports.
std::uint64_t config_hash(const ModelConfig& cfg);

}  // namespace stvl
