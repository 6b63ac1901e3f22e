// SPDX-License-Identifier: Apache-2.0
#include "stvl/data.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "stvl/errors.hpp"

namespace stvl {

namespace {

constexpr char kClipMagic[4] = {'S', 'T', 'V', 'B'};
constexpr std::uint16_t kClipVersion = 1;
constexpr std::uint16_t kDtypeFloat32 = 1;

struct Rgb {
  double r, g, b;
};

const std::array<std::string, 4> kColorNames = {"red", "green", "blue", "yellow"};
const std::array<Rgb, 4> kColors = {{{0.9, 0.15, 0.15}, {0.15, 0.85, 0.15}, {0.15, 0.25, 0.95}, {0.9, 0.85, 0.15}}};
const Rgb kWhite{0.9, 0.9, 0.9};
const std::array<std::string, 4> kCountNames = {"one", "two", "three", "four"};
const std::array<std::string, 4> kDirectionNames = {"left", "right", "up", "down"};

std::string question_text(Task t) {
  switch (t) {
    case Task::color: return "Q: what color is the square ? A:";
    case Task::count: return "Q: how many squares are there ? A:";
    case Task::direction: return "Q: which direction does the square move ? A:";
    case Task::order: return "Q: which color flashes first ? A:";
  }
  return {};
}

double to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

void fill_background(VideoClip& clip, Rng& rng, double noise) {
  for (auto& v : clip.pixels) v = std::clamp(0.1 + noise * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
}

void draw_square(VideoClip& clip, int t, int y0, int x0, int side, Rgb c) {
  for (int y = std::max(0, y0); y < std::min(clip.H, y0 + side); ++y)
    for (int x = std::max(0, x0); x < std::min(clip.W, x0 + side); ++x) {
      clip.at(t, y, x, 0) = c.r;
      clip.at(t, y, x, 1) = c.g;
      clip.at(t, y, x, 2) = c.b;
    }
}

// Pixel classes used by the labeler.
enum class Px { background, red, green, blue, yellow, white };

Px classify(const VideoClip& clip, int t, int y, int x) {
  const bool r = clip.at(t, y, x, 0) > 0.5, g = clip.at(t, y, x, 1) > 0.5, b = clip.at(t, y, x, 2) > 0.5;
  if (r && g && b) return Px::white;
  if (r && g) return Px::yellow;
  if (r) return Px::red;
  if (g) return Px::green;
  if (b) return Px::blue;
  return Px::background;
}

// Majority colour among bright non-white pixels of frame t; "" when none.
std::string frame_color(const VideoClip& clip, int t) {
  std::array<int, 4> votes{};
  for (int y = 0; y < clip.H; ++y)
    for (int x = 0; x < clip.W; ++x) {
      switch (classify(clip, t, y, x)) {
        case Px::red: ++votes[0]; break;
        case Px::green: ++votes[1]; break;
        case Px::blue: ++votes[2]; break;
        case Px::yellow: ++votes[3]; break;
        default: break;
      }
    }
  const auto best = std::max_element(votes.begin(), votes.end());
  return *best == 0 ? std::string() : kColorNames[static_cast<std::size_t>(best - votes.begin())];
}

int count_components(const VideoClip& clip, int t) {
  std::vector<int> seen(static_cast<std::size_t>(clip.H) * clip.W, 0);
  int n = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < clip.H; ++y)
    for (int x = 0; x < clip.W; ++x) {
      if (seen[y * clip.W + x] || classify(clip, t, y, x) == Px::background) continue;
      ++n;
      stack.assign(1, {y, x});
      seen[y * clip.W + x] = 1;
      while (!stack.empty()) {
        auto [cy, cx] = stack.back();
        stack.pop_back();
        const int nb[4][2] = {{cy - 1, cx}, {cy + 1, cx}, {cy, cx - 1}, {cy, cx + 1}};
        for (auto& q : nb) {
          const int qy = q[0], qx = q[1];
          if (qy < 0 || qx < 0 || qy >= clip.H || qx >= clip.W || seen[qy * clip.W + qx]) continue;
          if (classify(clip, t, qy, qx) == Px::background) continue;
          seen[qy * clip.W + qx] = 1;
          stack.emplace_back(qy, qx);
        }
      }
    }
  return n;
}

std::string direction_label(const VideoClip& clip) {
  // Least-squares slope of the bright-pixel centroid against frame index.
  std::vector<double> ts, xs, ys;
  for (int t = 0; t < clip.T; ++t) {
    double sx = 0, sy = 0;
    int n = 0;
    for (int y = 0; y < clip.H; ++y)
      for (int x = 0; x < clip.W; ++x)
        if (classify(clip, t, y, x) != Px::background) {
          sx += x;
          sy += y;
          ++n;
        }
    if (n == 0) continue;
    ts.push_back(t);
    xs.push_back(sx / n);
    ys.push_back(sy / n);
  }
  if (ts.size() < 2) return {};
  auto slope = [&ts](const std::vector<double>& v) {
    const double n = static_cast<double>(ts.size());
    double mt = 0, mv = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      mt += ts[i] / n;
      mv += v[i] / n;
    }
    double num = 0, den = 0;
    for (std::size_t i = 0; i < ts.size(); ++i) {
      num += (ts[i] - mt) * (v[i] - mv);
      den += (ts[i] - mt) * (ts[i] - mt);
    }
    return num / den;
  };
  const double dx = slope(xs), dy = slope(ys);
  if (std::abs(dx) >= std::abs(dy)) return dx < 0 ? "left" : "right";
  return dy < 0 ? "up" : "down";
}

void put_u16(std::ostream& out, std::uint16_t v) {
  const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  out.write(b, 2);
}

std::uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  if (!in) throw DataError("truncated clip header");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::vector<int> parse_ids(const std::string& s) {
  std::vector<int> ids;
  std::istringstream is(s);
  int v;
  while (is >> v) ids.push_back(v);
  if (!is.eof()) throw DataError("bad id list '" + s + "'");
  return ids;
}

std::string join_ids(const std::vector<int>& ids) {
  std::string out;
  for (int v : ids) out += (out.empty() ? "" : " ") + std::to_string(v);
  return out;
}

}  // namespace

std::string task_name(Task t) {
  switch (t) {
    case Task::color: return "color";
    case Task::count: return "count";
    case Task::direction: return "direction";
    case Task::order: return "order";
  }
  return {};
}

Task parse_task(std::string_view name) {
  for (Task t : all_tasks())
    if (task_name(t) == name) return t;
  throw ConfigError("unknown task '" + std::string(name) + "'");
}

std::vector<Task> parse_tasks(std::string_view list) {
  std::vector<Task> out;
  while (!list.empty()) {
    const auto comma = list.find(',');
    const auto name = list.substr(0, comma);
    if (!name.empty()) out.push_back(parse_task(name));
    list = comma == std::string_view::npos ? std::string_view() : list.substr(comma + 1);
  }
  if (out.empty()) throw ConfigError("empty task list");
  return out;
}

const std::vector<Task>& all_tasks() {
  static const std::vector<Task> t = {Task::color, Task::count, Task::direction, Task::order};
  return t;
}

SyntheticSample generate_sample(Task task, std::uint64_t seed, std::size_t index, const Vocabulary& vocab,
                                const GeneratorOptions& opts) {
  if (opts.frames < 2 || opts.size < 16) throw ConfigError("generator needs >= 2 frames and size >= 16");
  Rng rng(Rng::derive(seed, index, static_cast<std::uint64_t>(task) + 1));
  const int S = opts.size, T = opts.frames;
  SyntheticSample s;
  char id[16];
  std::snprintf(id, sizeof id, "%06zu", index);
  s.id = id;
  s.task = task;
  s.clip = VideoClip::zeros(T, S, S);
  fill_background(s.clip, rng, opts.noise);
  std::string answer;

  switch (task) {
    case Task::color: {
      const int c = rng.range(0, 3);
      const int side = rng.range(S / 5, S / 3);
      const int y0 = rng.range(0, S - side), x0 = rng.range(0, S - side);
      for (int t = 0; t < T; ++t) draw_square(s.clip, t, y0, x0, side, kColors[c]);
      answer = kColorNames[c];
      break;
    }
    case Task::count: {
      const int k = rng.range(1, 4);
      const int cell = S / 4, side = S / 8;
      std::vector<int> cells(16);
      for (int i = 0; i < 16; ++i) cells[i] = i;
      rng.shuffle(cells);
      for (int n = 0; n < k; ++n) {
        const int y0 = (cells[n] / 4) * cell + rng.range(0, cell - side - 1);
        const int x0 = (cells[n] % 4) * cell + rng.range(0, cell - side - 1);
        for (int t = 0; t < T; ++t) draw_square(s.clip, t, y0, x0, side, kWhite);
      }
      answer = kCountNames[k - 1];
      break;
    }
    case Task::direction: {
      const int dir = rng.range(0, 3);
      const int c = rng.range(0, 3);
      const int side = S * 3 / 8;
      const int travel = S - side - 4;
      const int start = rng.range(0, S - side - travel);
      const int across = rng.range(0, S - side);
      for (int t = 0; t < T; ++t) {
        const int step = static_cast<int>(std::lround(static_cast<double>(travel) * t / (T - 1)));
        int along = start + step;
        if (dir == 0 || dir == 2) along = S - side - along;  // left / up run backwards
        const bool horizontal = dir < 2;
        draw_square(s.clip, t, horizontal ? across : along, horizontal ? along : across, side, kColors[c]);
      }
      answer = kDirectionNames[dir];
      break;
    }
    case Task::order: {
      const int first = rng.range(0, 3);
      int second = rng.range(0, 2);
      if (second >= first) ++second;
      // Back-to-back flashes at overlapping spots: the order is a local
      // spatio-temporal pattern, and any single frame shows one colour only.
      const int a = rng.range(0, T - 2);
      const int side = rng.range(S * 5 / 16, S * 7 / 16);
      const int y0 = rng.range(2, S - side - 2), x0 = rng.range(2, S - side - 2);
      draw_square(s.clip, a, y0, x0, side, kColors[first]);
      draw_square(s.clip, a + 1, y0 + rng.range(-2, 2), x0 + rng.range(-2, 2), side, kColors[second]);
      answer = kColorNames[first];
      break;
    }
  }
  for (auto& v : s.clip.pixels) v = to_float(v);
  s.question = vocab.encode(question_text(task));
  s.answer = vocab.encode(answer + " <eos>");
  return s;
}

std::vector<SyntheticSample> generate_samples(std::size_t n, const std::vector<Task>& tasks, std::uint64_t seed,
                                              const Vocabulary& vocab, const GeneratorOptions& opts) {
  if (n < 1) throw ConfigError("dataset size must be >= 1");
  if (tasks.empty()) throw ConfigError("empty task list");
  std::vector<SyntheticSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(generate_sample(tasks[i % tasks.size()], seed, i, vocab, opts));
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<SyntheticSample>& samples,
                   const Vocabulary& vocab) {
  std::filesystem::create_directories(dir / "clips");
  vocab.save(dir / "vocab.txt");
  std::ofstream tsv(dir / "samples.tsv", std::ios::binary);
  if (!tsv) throw DataError("cannot write " + (dir / "samples.tsv").string());
  tsv << "id\ttask\tquestion\tanswer\n";
  for (const auto& s : samples) {
    write_clip(dir / "clips" / (s.id + ".stvb"), s.clip);
    tsv << s.id << '\t' << task_name(s.task) << '\t' << join_ids(s.question) << '\t' << join_ids(s.answer) << '\n';
  }
}

void generate_dataset(const std::filesystem::path& dir, std::size_t n, const std::vector<Task>& tasks,
                      std::uint64_t seed, const GeneratorOptions& opts) {
  const Vocabulary vocab = Vocabulary::synthetic();
  write_dataset(dir, generate_samples(n, tasks, seed, vocab, opts), vocab);
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  ds.vocab = Vocabulary::load(dir / "vocab.txt");
  std::ifstream tsv(dir / "samples.tsv");
  if (!tsv) throw DataError("missing " + (dir / "samples.tsv").string());
  std::string line;
  std::getline(tsv, line);
  if (line.rfind("id\t", 0) != 0) throw DataError("samples.tsv: missing header");
  std::size_t line_no = 1;
  while (std::getline(tsv, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      const auto tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab == std::string::npos ? std::string::npos : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 4) throw DataError("samples.tsv line " + std::to_string(line_no) + ": expected 4 columns");
    SyntheticSample s;
    s.id = cols[0];
    try {
      s.task = parse_task(cols[1]);
    } catch (const ConfigError& e) {
      throw DataError("samples.tsv line " + std::to_string(line_no) + ": " + e.what());
    }
    s.question = parse_ids(cols[2]);
    s.answer = parse_ids(cols[3]);
    for (const auto* ids : {&s.question, &s.answer})
      for (int v : *ids)
        if (v < 0 || v >= ds.vocab.size())
          throw DataError("samples.tsv line " + std::to_string(line_no) + ": token id " + std::to_string(v) +
                          " outside the vocabulary");
    s.clip = read_clip(dir / "clips" / (s.id + ".stvb"));
    ds.samples.push_back(std::move(s));
  }
  if (ds.samples.empty()) throw DataError("dataset " + dir.string() + " has no samples");
  return ds;
}

void write_clip(const std::filesystem::path& path, const VideoClip& clip) {
  if (clip.T > 0xffff || clip.H > 0xffff || clip.W > 0xffff) throw DataError("clip too large for ClipFile");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kClipMagic, 4);
  put_u16(out, kClipVersion);
  put_u16(out, static_cast<std::uint16_t>(clip.T));
  put_u16(out, static_cast<std::uint16_t>(clip.H));
  put_u16(out, static_cast<std::uint16_t>(clip.W));
  put_u16(out, kDtypeFloat32);
  std::vector<char> buf(clip.pixels.size() * 4);
  for (std::size_t i = 0; i < clip.pixels.size(); ++i) {
    const float f = static_cast<float>(clip.pixels[i]);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int k = 0; k < 4; ++k) buf[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xff);
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw DataError("short write to " + path.string());
}

VideoClip read_clip(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open clip " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kClipMagic, 4) != 0) throw DataError(path.string() + ": not a STVB clip");
  if (get_u16(in) != kClipVersion) throw DataError(path.string() + ": unsupported clip version");
  const int T = get_u16(in), H = get_u16(in), W = get_u16(in);
  if (get_u16(in) != kDtypeFloat32) throw DataError(path.string() + ": unsupported dtype");
  VideoClip clip = VideoClip::zeros(T, H, W);
  std::vector<unsigned char> buf(clip.pixels.size() * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw DataError(path.string() + ": truncated payload");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError(path.string() + ": trailing bytes");
  for (std::size_t i = 0; i < clip.pixels.size(); ++i) {
    std::uint32_t bits = 0;
    for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(buf[i * 4 + k]) << (8 * k);
    float f;
    std::memcpy(&f, &bits, 4);
    clip.pixels[i] = f;
  }
  return clip;
}

std::vector<int> sample_frame_indices(int frames, int target) {
  if (frames < 1 || target < 1) throw ShapeError("sample_frames: need at least one frame");
  std::vector<int> idx(static_cast<std::size_t>(target));
  for (int k = 0; k < target; ++k) {
    const double pos = target == 1 ? 0.0 : static_cast<double>(k) * (frames - 1) / (target - 1);
    idx[k] = std::min(frames - 1, static_cast<int>(std::floor(pos + 0.5)));
  }
  return idx;
}

VideoClip sample_frames(const VideoClip& clip, int target) {
  return select_frames(clip, sample_frame_indices(clip.T, target));
}

std::string label_clip(Task task, const VideoClip& clip) {
  switch (task) {
    case Task::color: return frame_color(clip, 0);
    case Task::count: {
      const int n = count_components(clip, 0);
      return n >= 1 && n <= 4 ? kCountNames[n - 1] : std::string();
    }
    case Task::direction: return direction_label(clip);
    case Task::order:
      for (int t = 0; t < clip.T; ++t) {
        const std::string c = frame_color(clip, t);
        if (!c.empty()) return c;
      }
      return {};
  }
  return {};
}

}  // namespace stvl
