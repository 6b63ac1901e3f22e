// SPDX-License-Identifier: Apache-2.0
#include "stvl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "stvl/errors.hpp"

namespace stvl {

namespace {

std::string shape_string(const Shape& s) {
  std::string out;
  for (Index d : s) out += (out.empty() ? "" : "x") + std::to_string(d);
  return out.empty() ? "scalar" : out;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  if (text == "scalar") return s;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto x = text.find('x', pos);
    const std::string part = text.substr(pos, x == std::string::npos ? std::string::npos : x - pos);
    try {
      std::size_t used = 0;
      s.push_back(std::stoll(part, &used));
      if (used != part.size() || s.back() < 0) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw DataError("checkpoint: bad shape '" + text + "'");
    }
    if (x == std::string::npos) break;
    pos = x + 1;
  }
  return s;
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("cannot write " + path.string());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

Checkpoint Checkpoint::capture(const VideoLanguageModel& model, int stage, const Rng& rng, TeacherMode teacher) {
  Checkpoint c;
  c.config = model.config();
  c.switches = model.switches();
  c.teacher = teacher;
  c.stage = stage;
  c.rng_state = rng.state();
  for (const auto& e : model.params().entries()) {
    const auto v = e.tensor.data();
    c.tensors.push_back({e.name, e.module, e.tensor.shape(), e.frozen, std::vector<double>(v.begin(), v.end())});
  }
  return c;
}

VideoLanguageModel Checkpoint::restore() const {
  VideoLanguageModel model(config, switches);
  apply(model);
  return model;
}

void Checkpoint::apply(VideoLanguageModel& model) const {
  auto& entries = model.params().entries();
  if (entries.size() != tensors.size())
    throw DataError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model has " +
                    std::to_string(entries.size()));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& src = tensors[i];
    auto& dst = entries[i];
    if (src.name != dst.name) throw DataError("checkpoint tensor " + src.name + " where " + dst.name + " expected");
    if (src.shape != dst.tensor.shape())
      throw DataError("checkpoint tensor " + src.name + " has shape " + shape_string(src.shape) + ", model expects " +
                      shape_string(dst.tensor.shape()));
    auto v = dst.tensor.mutable_data();
    std::copy(src.values.begin(), src.values.end(), v.begin());
    dst.frozen = src.frozen;
  }
}

Rng Checkpoint::rng() const {
  Rng r;
  if (!rng_state.empty()) r.set_state(rng_state);
  return r;
}

void Checkpoint::save(const std::filesystem::path& dir) const {
  static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  manifest << "name\tmodule\tshape\tfrozen\toffset\n";
  std::string payload;
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    manifest << t.name << '\t' << t.module << '\t' << shape_string(t.shape) << '\t' << (t.frozen ? 1 : 0) << '\t'
             << offset << '\n';
    const auto* bytes = reinterpret_cast<const char*>(t.values.data());
    payload.append(bytes, t.values.size() * sizeof(double));
    offset += t.values.size();
  }
  KeyValueFile kv = config.to_kv();
  kv.set("switches", switches.to_string());
  kv.set("teacher", teacher_mode_name(teacher));
  kv.set("stage", std::to_string(stage));
  kv.set("rng_state", rng_state);
  write_file(dir / "manifest.tsv", manifest.str());
  write_file(dir / "params.bin", payload);
  write_file(dir / "state.kv", kv.to_string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("checkpoint directory " + dir.string() + " not found");
  Checkpoint c;
  const KeyValueFile kv = KeyValueFile::load(dir / "state.kv");
  c.config = ModelConfig::from_kv(kv);
  c.switches = Switches::parse(kv.get_or("switches", ""));
  c.teacher = parse_teacher_mode(kv.get_or("teacher", "linear_probe"));
  try {
    c.stage = std::stoi(kv.get_or("stage", "0"));
  } catch (const std::exception&) {
    throw DataError("checkpoint: bad stage value");
  }
  c.rng_state = kv.get_or("rng_state", "");

  const std::string payload = read_file(dir / "params.bin");
  if (payload.size() % sizeof(double) != 0) throw DataError("checkpoint: params.bin is not a float64 array");
  const std::size_t total = payload.size() / sizeof(double);

  std::istringstream manifest(read_file(dir / "manifest.tsv"));
  std::string line;
  std::getline(manifest, line);
  std::size_t expected_offset = 0;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    CheckpointTensor t;
    std::string shape, frozen, offset;
    if (!std::getline(row, t.name, '\t') || !std::getline(row, t.module, '\t') || !std::getline(row, shape, '\t') ||
        !std::getline(row, frozen, '\t') || !std::getline(row, offset))
      throw DataError("checkpoint manifest: malformed line '" + line + "'");
    t.shape = parse_shape(shape);
    t.frozen = frozen == "1";
    if (offset != std::to_string(expected_offset)) throw DataError("checkpoint manifest: bad offset for " + t.name);
    const std::size_t n = static_cast<std::size_t>(numel_of(t.shape));
    if (expected_offset + n > total) throw DataError("checkpoint: params.bin truncated at " + t.name);
    t.values.resize(n);
    std::memcpy(t.values.data(), payload.data() + expected_offset * sizeof(double), n * sizeof(double));
    expected_offset += n;
    c.tensors.push_back(std::move(t));
  }
  if (expected_offset != total) throw DataError("checkpoint: params.bin has trailing data");
  return c;
}

}  // namespace stvl
