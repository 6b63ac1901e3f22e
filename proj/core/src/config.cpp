// SPDX-License-Identifier: Apache-2.0
#include "stvl/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "stvl/errors.hpp"

namespace stvl {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ConfigError("config key '" + key + "': bad number '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("config key '" + key + "': expected true/false, got '" + text + "'");
}

}  // namespace

KeyValueFile KeyValueFile::parse(std::string_view text) {
  KeyValueFile kv;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    const std::string line = trim(text.substr(0, nl));
    text = nl == std::string_view::npos ? std::string_view() : text.substr(nl + 1);
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    kv.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void KeyValueFile::set(const std::string& key, std::string value) {
  for (auto& [k, v] : entries_)
    if (k == key) {
      v = std::move(value);
      return;
    }
  entries_.emplace_back(key, std::move(value));
}

bool KeyValueFile::contains(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return true;
  return false;
}

const std::string& KeyValueFile::get(const std::string& key) const {
  for (const auto& [k, v] : entries_)
    if (k == key) return v;
  throw ConfigError("missing config key '" + key + "'");
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  return contains(key) ? get(key) : fallback;
}

std::string KeyValueFile::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += k + "=" + v + "\n";
  return out;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_string();
}

ModelConfig ModelConfig::toy() {
  ModelConfig c;
  c.H_max = 32;
  c.W_max = 32;
  c.p = 4;
  c.d = 32;
  c.r = 4;
  c.d_lm = 64;
  c.d_mlp = 64;
  c.vocab_size = 64;
  return c;
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError("invalid model config: " + m); };
  if (T_max < 1) fail("T_max must be >= 1");
  if (p < 1) fail("p must be >= 1");
  if (H_max < p || W_max < p) fail("H_max/W_max must be >= p");
  if (H_max % p != 0 || W_max % p != 0) fail("H_max and W_max must be multiples of p");
  if ((H_max / p) % 2 != 0 || (W_max / p) % 2 != 0) fail("H_max/p and W_max/p must be even");
  if (d <= 0 || d_lm <= 0 || d_mlp <= 0) fail("d, d_lm and d_mlp must be positive");
  if (r <= 0 || d % r != 0) fail("r must divide d");
  if (vocab_size < 2) fail("vocab_size must be >= 2");
  if (lm_layers < 1 || lm_heads < 1 || d_lm % lm_heads != 0) fail("d_lm must split evenly into lm_heads");
  if (lm_context < 1 || lm_ff_mult < 1) fail("lm_context and lm_ff_mult must be positive");
}

KeyValueFile ModelConfig::to_kv() const {
  KeyValueFile kv;
  kv.set("T_max", std::to_string(T_max));
  kv.set("H_max", std::to_string(H_max));
  kv.set("W_max", std::to_string(W_max));
  kv.set("p", std::to_string(p));
  kv.set("d", std::to_string(d));
  kv.set("r", std::to_string(r));
  kv.set("d_lm", std::to_string(d_lm));
  kv.set("vocab_size", std::to_string(vocab_size));
  kv.set("seed", std::to_string(seed));
  kv.set("d_mlp", std::to_string(d_mlp));
  kv.set("lm_layers", std::to_string(lm_layers));
  kv.set("lm_heads", std::to_string(lm_heads));
  kv.set("lm_context", std::to_string(lm_context));
  kv.set("lm_ff_mult", std::to_string(lm_ff_mult));
  kv.set("lste_activation", lste_activation ? "true" : "false");
  return kv;
}

ModelConfig ModelConfig::from_kv(const KeyValueFile& kv) {
  ModelConfig c;
  auto int_key = [&kv](const char* key, int& field) {
    if (kv.contains(key)) field = parse_number<int>(key, kv.get(key));
  };
  int_key("T_max", c.T_max);
  int_key("H_max", c.H_max);
  int_key("W_max", c.W_max);
  int_key("p", c.p);
  int_key("d", c.d);
  int_key("r", c.r);
  int_key("d_lm", c.d_lm);
  int_key("vocab_size", c.vocab_size);
  int_key("d_mlp", c.d_mlp);
  int_key("lm_layers", c.lm_layers);
  int_key("lm_heads", c.lm_heads);
  int_key("lm_context", c.lm_context);
  int_key("lm_ff_mult", c.lm_ff_mult);
  if (kv.contains("seed")) c.seed = parse_number<std::uint64_t>("seed", kv.get("seed"));
  if (kv.contains("lste_activation")) c.lste_activation = parse_bool("lste_activation", kv.get("lste_activation"));
  return c;
}

const std::set<std::string>& ModelConfig::keys() {
  static const std::set<std::string> k = {"T_max", "H_max", "W_max", "p",        "d",
                                          "r",     "d_lm",  "vocab_size", "seed", "d_mlp",
                                          "lm_layers", "lm_heads", "lm_context", "lm_ff_mult",
                                          "lste_activation"};
  return k;
}

std::uint64_t config_hash(const ModelConfig& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : cfg.to_string()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace stvl
