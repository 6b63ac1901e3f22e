// SPDX-License-Identifier: Apache-2.0
//
// stvl: generate synthetic data, train the three stages, evaluate and
// profile. Exit codes: 0 success, 2 usage or config error, 3 data error,
// 4 numerical abort.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "run_manifest.hpp"
#include "stvl/checkpoint.hpp"
#include "stvl/data.hpp"
#include "stvl/errors.hpp"
#include "stvl/profiler.hpp"
#include "stvl/trainer.hpp"

namespace fs = std::filesystem;
using namespace stvl;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct ConfigArgs {
  std::string file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
};

void add_config_flags(CLI::App* cmd, ConfigArgs& a) {
  cmd->add_option("--config", a.file, "key=value config file (model and stage settings)");
  cmd->add_option("--set", a.sets, "override one config entry, key=value (repeatable)");
  cmd->add_option("--seed", a.seed, "seed; overrides the config file");
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> k(ModelConfig::keys().begin(), ModelConfig::keys().end());
    for (const auto& s : StageConfig::keys()) {
      k.insert(s);
      for (int stage = 1; stage <= 3; ++stage) k.insert("stage" + std::to_string(stage) + "." + s);
    }
    k.insert("teacher");
    k.insert("ablate");
    return k;
  }();
  return keys;
}

// Preset, then the config file, then --set and --seed.
KeyValueFile resolve_config(const ConfigArgs& a, const ModelConfig& preset = ModelConfig::toy()) {
  KeyValueFile kv = preset.to_kv();
  auto merge = [&kv](const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ConfigError("unknown config key '" + key + "'");
    kv.set(key, value);
  };
  if (!a.file.empty()) {
    const KeyValueFile file = KeyValueFile::load(a.file);
    for (const auto& [k, v] : file.entries()) merge(k, v);
  }
  for (const auto& s : a.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
    merge(s.substr(0, eq), s.substr(eq + 1));
  }
  if (a.seed) kv.set("seed", std::to_string(*a.seed));
  return kv;
}

std::vector<SyntheticSample> load_samples(const std::string& dir, const Vocabulary& vocab) {
  Dataset ds = load_dataset(dir);
  if (!(ds.vocab == vocab)) throw DataError("dataset " + dir + " uses a different vocabulary");
  return std::move(ds.samples);
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::size_t n = 0;
  std::string tasks = "color,count,direction,order";
  std::uint64_t seed = 0;
  std::string out;
  GeneratorOptions opts;
};

int cmd_generate(const GenerateArgs& a, cli::RunManifest& m) {
  const auto tasks = parse_tasks(a.tasks);
  if (a.n < 1) throw ConfigError("--n must be >= 1");
  generate_dataset(a.out, a.n, tasks, a.seed, a.opts);
  m.seed = a.seed;
  m.config.set("n", std::to_string(a.n));
  m.config.set("tasks", a.tasks);
  m.config.set("frames", std::to_string(a.opts.frames));
  m.config.set("size", std::to_string(a.opts.size));
  m.config.set("noise", std::to_string(a.opts.noise));
  m.outputs = {a.out};
  m.save(fs::path(a.out) / "run_manifest.json");
  std::printf("wrote %zu samples to %s\n", a.n, a.out.c_str());
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string stage;
  std::string data;
  std::string data3;
  std::string stage1_data;
  bool full_stage1 = false;
  std::string out;
  std::optional<std::string> ablate;
  std::string resume;
  std::string teacher;
  int log_every = 10;
  ConfigArgs config;
};

int cmd_train(const TrainArgs& a, cli::RunManifest& m) {
  int first = 1, last = 3;
  if (a.stage != "all") {
    if (a.stage != "1" && a.stage != "2" && a.stage != "3") throw ConfigError("--stage must be 1, 2, 3 or all");
    first = last = std::stoi(a.stage);
  }
  const KeyValueFile kv = resolve_config(a.config);

  std::optional<Checkpoint> resume;
  if (!a.resume.empty()) resume = Checkpoint::load(a.resume);
  if (first > 1 && !resume)
    throw ConfigError("--stage " + a.stage + " needs --resume with the stage " + std::to_string(first - 1) +
                      " checkpoint");
  if (resume && resume->stage != first - 1)
    throw ConfigError("stage/resume mismatch: checkpoint " + a.resume + " completed stage " +
                      std::to_string(resume->stage) + ", --stage " + a.stage + " needs stage " +
                      std::to_string(first - 1));

  PipelineConfig pc;
  pc.model = resume ? resume->config : ModelConfig::from_kv(kv);
  pc.model.validate();
  const std::string ablate = a.ablate ? *a.ablate : kv.get_or("ablate", "");
  pc.switches = Switches::parse(ablate);
  if (resume && a.ablate && !(pc.switches == resume->switches))
    throw ConfigError("--ablate '" + *a.ablate + "' differs from the checkpoint's switches '" +
                      resume->switches.to_string() + "'");
  if (resume && !a.ablate) pc.switches = resume->switches;
  pc.teacher = !a.teacher.empty()     ? parse_teacher_mode(a.teacher)
               : resume               ? resume->teacher
                                      : parse_teacher_mode(kv.get_or("teacher", "linear_probe"));
  for (int s = 1; s <= 3; ++s) pc.stages[s - 1] = StageConfig::from_kv(s, kv);
  pc.first_stage = first;
  pc.last_stage = last;
  pc.stage1_half = !a.full_stage1;
  pc.out_dir = a.out;

  const Vocabulary vocab = Vocabulary::synthetic();
  if (vocab.size() > pc.model.vocab_size)
    throw ConfigError("vocab_size " + std::to_string(pc.model.vocab_size) + " is smaller than the vocabulary (" +
                      std::to_string(vocab.size()) + ")");
  PipelineData data;
  if (first <= 2) data.stage2 = load_samples(a.data, vocab);
  if (last == 3) data.stage3 = load_samples(a.data3.empty() ? a.data : a.data3, vocab);
  if (first == 1 && !a.stage1_data.empty()) data.stage1 = load_samples(a.stage1_data, vocab);

  fs::create_directories(a.out);
  if (!resume) {
    const Rng init_rng(Rng::derive(pc.model.seed, 0x7a1));
    Checkpoint::capture(VideoLanguageModel(pc.model, pc.switches), 0, init_rng, pc.teacher).save(fs::path(a.out) / "stage0");
    vocab.save(fs::path(a.out) / "stage0" / "vocab.txt");
  }

  const int every = std::max(1, a.log_every);
  auto on_step = [every](const StepRecord& r) {
    if (r.step % every == 0)
      std::fprintf(stderr, "stage %d step %4d  lr %.3e  loss %.5f  text %.5f  distill %.5f  |g| %.3f\n", r.stage,
                   r.step, r.lr, r.loss, r.text_loss, r.distill_loss, r.grad_norm);
  };
  const PipelineResult res = run_pipeline(pc, data, resume ? &*resume : nullptr, on_step);

  KeyValueFile snapshot = pc.model.to_kv();
  for (const auto& s : pc.stages) s.to_kv(snapshot);
  snapshot.set("teacher", teacher_mode_name(pc.teacher));
  m.config = snapshot;
  m.seed = pc.model.seed;
  m.switches = pc.switches.to_string();
  for (std::size_t i = 0; i < res.checkpoints.size(); ++i) {
    vocab.save(res.checkpoints[i] / "vocab.txt");
    m.outputs.push_back(res.checkpoints[i].string());
    m.outputs.push_back((fs::path(a.out) / ("losses_stage" + std::to_string(res.reports[i].stage) + ".tsv")).string());
    const auto& steps = res.reports[i].steps;
    std::printf("stage %d: %zu samples, %zu steps, final loss %.5f -> %s\n", res.reports[i].stage,
                res.reports[i].samples, steps.size(), steps.empty() ? 0.0 : steps.back().loss,
                res.checkpoints[i].c_str());
  }
  m.save(fs::path(a.out) / "run_manifest.json");
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string out;
};

int cmd_eval(const EvalArgs& a, cli::RunManifest& m) {
  const Checkpoint ck = Checkpoint::load(a.ckpt);
  const Dataset ds = load_dataset(a.data);
  const fs::path ck_vocab = fs::path(a.ckpt) / "vocab.txt";
  if (fs::exists(ck_vocab) && !(Vocabulary::load(ck_vocab) == ds.vocab))
    throw DataError("vocabulary mismatch between checkpoint " + a.ckpt + " and dataset " + a.data);
  if (ds.vocab.size() > ck.config.vocab_size)
    throw DataError("dataset vocabulary (" + std::to_string(ds.vocab.size()) + " tokens) exceeds the model's " +
                    std::to_string(ck.config.vocab_size));
  const VideoLanguageModel model = ck.restore();
  const EvalResult r = evaluate(model, ds.samples, ds.vocab.eos());

  fs::create_directories(a.out);
  const fs::path metrics = fs::path(a.out) / "metrics.tsv";
  std::ofstream out(metrics);
  out << "task\tcount\tcorrect\taccuracy\n";
  char line[128];
  for (const auto& t : r.per_task) {
    std::snprintf(line, sizeof line, "%s\t%zu\t%zu\t%.6f\n", task_name(t.task).c_str(), t.count, t.correct,
                  t.accuracy());
    out << line;
    std::printf("%s", line);
  }
  std::snprintf(line, sizeof line, "all\t%zu\t%zu\t%.6f\n", r.count, r.correct, r.accuracy());
  out << line;
  std::printf("%s", line);
  if (!out) throw DataError("cannot write " + metrics.string());

  m.config = ck.config.to_kv();
  m.seed = ck.config.seed;
  m.switches = ck.switches.to_string();
  m.outputs = {metrics.string()};
  m.save(fs::path(a.out) / "run_manifest.json");
  return 0;
}

// ----------------------------------------------------------------- profile

struct ProfileArgs {
  ConfigArgs config;
  std::string preset = "toy";
  int runs = 10;
  std::string out;
};

int cmd_profile(const ProfileArgs& a, cli::RunManifest& m) {
  if (a.preset != "toy" && a.preset != "default") throw ConfigError("--preset must be toy or default");
  const KeyValueFile kv = resolve_config(a.config, a.preset == "toy" ? ModelConfig::toy() : ModelConfig());
  const ModelConfig cfg = ModelConfig::from_kv(kv);
  cfg.validate();
  if (a.runs != 0 && a.runs < 5) throw ConfigError("--runs must be 0 or at least 5");
  const CostReport report = profile(cfg, a.runs, cfg.seed);
  std::printf("%s", report.table().c_str());
  m.config = cfg.to_kv();
  m.seed = cfg.seed;
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const fs::path table = fs::path(a.out) / "cost_report.txt";
    const fs::path kvfile = fs::path(a.out) / "cost_report.kv";
    std::ofstream(table) << report.table();
    report.to_kv().save(kvfile);
    m.outputs = {table.string(), kvfile.string()};
    m.save(fs::path(a.out) / "run_manifest.json");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stvl: encoder-free video-language toolkit"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "write a synthetic video QA dataset");
  g->add_option("--n", gen.n, "number of samples")->required();
  g->add_option("--tasks", gen.tasks, "comma-separated tasks: color,count,direction,order");
  g->add_option("--seed", gen.seed, "generator seed");
  g->add_option("--out", gen.out, "output directory")->required();
  g->add_option("--frames", gen.opts.frames, "frames per clip");
  g->add_option("--size", gen.opts.size, "frame height and width in pixels");
  g->add_option("--noise", gen.opts.noise, "background noise amplitude");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "run training stages and write checkpoints");
  t->add_option("--stage", tr.stage, "1, 2, 3 or all")->required();
  t->add_option("--data", tr.data, "training set (stage 1 uses half of it)");
  t->add_option("--data3", tr.data3, "stage-3 set (default: --data)");
  t->add_option("--stage1-data", tr.stage1_data, "explicit stage-1 set");
  t->add_flag("--full-stage1", tr.full_stage1, "train stage 1 on all of --data");
  t->add_option("--out", tr.out, "output directory for checkpoints and logs")->required();
  t->add_option("--ablate", tr.ablate, "comma-separated ablation switches");
  t->add_option("--resume", tr.resume, "checkpoint of the preceding stage");
  t->add_option("--teacher", tr.teacher, "teacher stub: linear_probe or frozen_random");
  t->add_option("--log-every", tr.log_every, "progress line every N steps");
  add_config_flags(t, tr.config);

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "exact-match accuracy per task with greedy decoding");
  e->add_option("--ckpt", ev.ckpt, "checkpoint directory")->required();
  e->add_option("--data", ev.data, "dataset directory")->required();
  e->add_option("--out", ev.out, "output directory for metrics.tsv")->required();

  ProfileArgs pr;
  auto* p = app.add_subcommand("profile", "parameter, FLOP and latency report for the visual path");
  add_config_flags(p, pr.config);
  p->add_option("--preset", pr.preset, "base config: toy or default");
  p->add_option("--runs", pr.runs, "timed runs (0 skips latency)");
  p->add_option("--out", pr.out, "output directory for the report files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return kExitUsage;
  }

  cli::RunManifest manifest;
  try {
    if (*g) {
      manifest.start("generate", argc, argv);
      return cmd_generate(gen, manifest);
    }
    if (*t) {
      if (tr.stage != "3" && tr.data.empty()) throw ConfigError("--data is required");
      manifest.start("train", argc, argv);
      return cmd_train(tr, manifest);
    }
    if (*e) {
      manifest.start("eval", argc, argv);
      return cmd_eval(ev, manifest);
    }
    if (*p) {
      manifest.start("profile", argc, argv);
      return cmd_profile(pr, manifest);
    }
  } catch (const NumericalError& ex) {
    std::fprintf(stderr, "numerical error: %s\n", ex.what());
    return kExitNumerical;
  } catch (const DataError& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return kExitData;
  } catch (const fs::filesystem_error& ex) {
    std::fprintf(stderr, "data error: %s\n", ex.what());
    return kExitData;
  } catch (const std::invalid_argument& ex) {
    // ConfigError, ShapeError and other argument errors.
    std::fprintf(stderr, "error: %s\n", ex.what());
    return kExitUsage;
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return kExitUsage;
}
