// SPDX-License-Identifier: Apache-2.0
#include "stvl/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "stvl/errors.hpp"
#include "stvl/losses.hpp"
#include "stvl/ops.hpp"

namespace stvl {

namespace {

constexpr std::uint64_t kOrderStream = 0x0de4;
constexpr std::uint64_t kHalfStream = 0x4a1f;

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

StageConfig StageConfig::defaults(int stage) {
  StageConfig c;
  c.stage = stage;
  switch (stage) {
    case 1:
      c.lr = 4e-4;
      c.warmup_ratio = 0.03;
      break;
    case 2:
      c.lr = 4e-5;
      c.warmup_ratio = 0.01;
      break;
    case 3:
      c.lr = 2e-5;
      c.warmup_ratio = 0.01;
      c.distill = false;
      c.answer_only = true;
      break;
    default:
      throw ConfigError("stage must be 1, 2 or 3, got " + std::to_string(stage));
  }
  c.freeze_lm = stage == 1;
  return c;
}

const std::vector<std::string>& StageConfig::keys() {
  static const std::vector<std::string> k = {"batch_size", "lr",          "warmup_ratio",   "weight_decay",
                                             "epochs",     "distill",     "answer_only",    "distill_weight",
                                             "clip_norm",  "beta1",       "beta2",          "adam_eps"};
  return k;
}

StageConfig StageConfig::from_kv(int stage, const KeyValueFile& kv) {
  StageConfig c = defaults(stage);
  const std::string prefix = "stage" + std::to_string(stage) + ".";
  auto lookup = [&](const std::string& key) -> std::optional<std::string> {
    if (kv.contains(prefix + key)) return kv.get(prefix + key);
    if (kv.contains(key)) return kv.get(key);
    return std::nullopt;
  };
  auto number = [&](const std::string& key, auto& field) {
    const auto text = lookup(key);
    if (!text) return;
    try {
      std::size_t used = 0;
      const double v = std::stod(*text, &used);
      if (used != text->size()) throw std::invalid_argument(key);
      field = static_cast<std::remove_reference_t<decltype(field)>>(v);
      if (static_cast<double>(field) != v) throw std::invalid_argument(key);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': bad number '" + *text + "'");
    }
  };
  auto flag = [&](const std::string& key, bool& field) {
    const auto text = lookup(key);
    if (!text) return;
    if (*text == "true" || *text == "1") field = true;
    else if (*text == "false" || *text == "0") field = false;
    else throw ConfigError("config key '" + key + "': expected true/false, got '" + *text + "'");
  };
  number("batch_size", c.batch_size);
  number("lr", c.lr);
  number("warmup_ratio", c.warmup_ratio);
  number("weight_decay", c.weight_decay);
  number("epochs", c.epochs);
  flag("distill", c.distill);
  flag("answer_only", c.answer_only);
  number("distill_weight", c.distill_weight);
  number("clip_norm", c.clip_norm);
  number("beta1", c.beta1);
  number("beta2", c.beta2);
  number("adam_eps", c.adam_eps);
  c.validate();
  return c;
}

void StageConfig::validate() const {
  auto fail = [this](const std::string& m) {
    throw ConfigError("stage " + std::to_string(stage) + " config: " + m);
  };
  if (stage < 1 || stage > 3) fail("stage must be 1, 2 or 3");
  if (freeze_lm != (stage == 1)) fail("the LM is frozen in stage 1 and trained in stages 2-3");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 1) fail("epochs must be >= 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr must be finite and >= 0");
  if (!(warmup_ratio >= 0.0 && warmup_ratio <= 1.0)) fail("warmup_ratio must lie in [0, 1]");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(distill_weight >= 0.0)) fail("distill_weight must be >= 0");
}

void StageConfig::to_kv(KeyValueFile& kv) const {
  const std::string prefix = "stage" + std::to_string(stage) + ".";
  kv.set(prefix + "batch_size", std::to_string(batch_size));
  kv.set(prefix + "lr", fmt_double(lr));
  kv.set(prefix + "warmup_ratio", fmt_double(warmup_ratio));
  kv.set(prefix + "weight_decay", fmt_double(weight_decay));
  kv.set(prefix + "epochs", std::to_string(epochs));
  kv.set(prefix + "distill", distill ? "true" : "false");
  kv.set(prefix + "answer_only", answer_only ? "true" : "false");
  kv.set(prefix + "distill_weight", fmt_double(distill_weight));
  kv.set(prefix + "clip_norm", fmt_double(clip_norm));
  kv.set(prefix + "beta1", fmt_double(beta1));
  kv.set(prefix + "beta2", fmt_double(beta2));
  kv.set(prefix + "adam_eps", fmt_double(adam_eps));
}

LossParts sample_loss(const VideoLanguageModel& model, const TeacherStub& teacher, const SyntheticSample& sample,
                      const StageConfig& cfg) {
  const int T = model.config().T_max;
  const VideoClip clip = sample.clip.T == T ? sample.clip : sample_frames(sample.clip, T);

  std::vector<int> text(sample.question);
  text.insert(text.end(), sample.answer.begin(), sample.answer.end());
  std::vector<double> weights;
  if (cfg.answer_only) {
    weights.assign(text.size(), 1.0);
    std::fill(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(sample.question.size()), 0.0);
  }

  VisualTokenSequence seq;
  const OutputPartition out = model.forward(clip, text, &seq);
  LossParts parts;
  parts.total = text_loss(out.other_logits, out.text_targets, weights);
  parts.text = parts.total.item();

  const Switches& sw = model.switches();
  if (cfg.distill && sw.distill != DistillKind::none && cfg.distill_weight > 0.0) {
    const Tensor target = teacher.tokens(clip, seq.layout);
    std::vector<Index> rows;
    if (sw.distill_spatial_only)
      for (std::size_t i = 0; i < seq.layout.size(); ++i)
        if (seq.layout.tokens[i].role == TokenRole::spatial) rows.push_back(static_cast<Index>(i));
    const Tensor d = sw.distill == DistillKind::mse ? distill_loss_mse(out.v_pred, target, rows)
                                                    : distill_loss(out.v_pred, target, rows);
    parts.distill = d.item();
    parts.total = add(parts.total, scale(d, cfg.distill_weight));
  }
  return parts;
}

int warmup_steps(int total_steps, double warmup_ratio) {
  return static_cast<int>(std::ceil(warmup_ratio * total_steps));
}

double learning_rate(int step, int total_steps, double peak, double warmup_ratio) {
  const int W = warmup_steps(total_steps, warmup_ratio);
  if (step < W) return peak * static_cast<double>(step + 1) / W;
  const int span = total_steps - 1 - W;
  if (span <= 0) return peak;
  const double progress = std::min(1.0, static_cast<double>(step - W) / span);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

AdamW::AdamW(const ParamStore& store, double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  for (const auto& e : store.entries()) {
    m_.emplace_back(static_cast<std::size_t>(e.tensor.numel()), 0.0);
    v_.emplace_back(static_cast<std::size_t>(e.tensor.numel()), 0.0);
  }
}

void AdamW::step(ParamStore& store, double lr) {
  auto& entries = store.entries();
  if (entries.size() != m_.size()) throw ConfigError("AdamW: parameter store changed since construction");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    if (e.frozen) continue;
    const auto g = e.tensor.grad();
    auto w = e.tensor.mutable_data();
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      if (weight_decay_ > 0.0) w[i] -= lr * weight_decay_ * w[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double grad_norm(const ParamStore& store) {
  double sq = 0.0;
  for (const auto& e : store.entries()) {
    if (e.frozen) continue;
    for (double g : e.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  const double norm = grad_norm(store);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& e : store.entries()) {
      if (e.frozen || e.tensor.grad().empty()) continue;
      for (double& g : e.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

void apply_freeze_schedule(VideoLanguageModel& model, const StageConfig& cfg) {
  model.params().set_frozen([](const ParamEntry&) { return true; }, false);
  if (cfg.freeze_lm) model.params().set_frozen([](const ParamEntry& e) { return e.module == "lm"; }, true);
}

TrainReport run_stage(const StageConfig& cfg, VideoLanguageModel& model, const TeacherStub& teacher,
                      std::span<const SyntheticSample> data, Rng& rng, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw DataError("stage " + std::to_string(cfg.stage) + ": empty dataset");
  apply_freeze_schedule(model, cfg);
  ParamStore& store = model.params();
  AdamW opt(store, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);

  const int per_epoch = static_cast<int>((data.size() + cfg.batch_size - 1) / cfg.batch_size);
  const int total = per_epoch * cfg.epochs;
  TrainReport report;
  report.stage = cfg.stage;
  report.samples = data.size();

  std::vector<std::size_t> order(data.size());
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(rng.next() ^ kOrderStream);
    shuffle.shuffle(order);
    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size, ++step) {
      const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
      const double inv = 1.0 / static_cast<double>(end - begin);
      store.zero_grad();
      StepRecord rec;
      rec.stage = cfg.stage;
      rec.step = step;
      rec.lr = learning_rate(step, total, cfg.lr, cfg.warmup_ratio);
      for (std::size_t k = begin; k < end; ++k) {
        const SyntheticSample& s = data[order[k]];
        LossParts parts = sample_loss(model, teacher, s, cfg);
        const double value = parts.total.item();
        if (!std::isfinite(value))
          throw NumericalError("stage " + std::to_string(cfg.stage) + " step " + std::to_string(step) +
                               ": non-finite loss on sample " + s.id + " (text " + fmt_double(parts.text) +
                               ", distill " + fmt_double(parts.distill) + ")");
        scale(parts.total, inv).backward();
        rec.loss += value * inv;
        rec.text_loss += parts.text * inv;
        rec.distill_loss += parts.distill * inv;
      }
      rec.grad_norm = clip_grad_norm(store, cfg.clip_norm);
      if (!std::isfinite(rec.grad_norm))
        throw NumericalError("stage " + std::to_string(cfg.stage) + " step " + std::to_string(step) +
                             ": non-finite gradient norm");
      opt.step(store, rec.lr);
      report.steps.push_back(rec);
      if (on_step) on_step(rec);
    }
  }
  store.zero_grad();
  return report;
}

std::vector<std::size_t> half_subset(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(Rng::derive(seed, kHalfStream));
  rng.shuffle(idx);
  idx.resize(n / 2);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void write_loss_log(const std::filesystem::path& path, const TrainReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "stage\tstep\tlr\tloss\ttext_loss\tdistill_loss\tgrad_norm\n";
  for (const auto& r : report.steps)
    out << r.stage << '\t' << r.step << '\t' << fmt_double(r.lr) << '\t' << fmt_double(r.loss) << '\t'
        << fmt_double(r.text_loss) << '\t' << fmt_double(r.distill_loss) << '\t' << fmt_double(r.grad_norm) << '\n';
  if (!out) throw DataError("short write to " + path.string());
}

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineData& data, const Checkpoint* resume,
                            const StepCallback& on_step) {
  if (cfg.first_stage < 1 || cfg.last_stage > 3 || cfg.first_stage > cfg.last_stage)
    throw ConfigError("pipeline stages must satisfy 1 <= first <= last <= 3");
  if (cfg.first_stage > 1 && !resume)
    throw ConfigError("stage " + std::to_string(cfg.first_stage) + " needs the stage " +
                      std::to_string(cfg.first_stage - 1) + " checkpoint");
  if (resume && resume->stage != cfg.first_stage - 1)
    throw ConfigError("checkpoint completed stage " + std::to_string(resume->stage) + " but the run starts at stage " +
                      std::to_string(cfg.first_stage));

  VideoLanguageModel model = resume ? resume->restore() : VideoLanguageModel(cfg.model, cfg.switches);
  if (resume) model.set_switches(cfg.switches);
  Rng rng = resume ? resume->rng() : Rng(Rng::derive(cfg.model.seed, 0x7a1));
  const TeacherStub teacher = TeacherStub::make(model.config(), cfg.teacher, model.config().seed);

  std::vector<SyntheticSample> half;
  if (data.stage1.empty() && cfg.stage1_half && cfg.first_stage == 1) {
    for (std::size_t i : half_subset(data.stage2.size(), model.config().seed)) half.push_back(data.stage2[i]);
  }

  PipelineResult result;
  for (int stage = cfg.first_stage; stage <= cfg.last_stage; ++stage) {
    std::span<const SyntheticSample> set;
    if (stage == 1) set = !data.stage1.empty() ? std::span(data.stage1) : cfg.stage1_half ? std::span(half) : std::span(data.stage2);
    else if (stage == 2) set = data.stage2;
    else set = data.stage3;
    if (set.empty()) throw DataError("stage " + std::to_string(stage) + ": empty dataset");

    result.reports.push_back(run_stage(cfg.stages[stage - 1], model, teacher, set, rng, on_step));
    result.final_checkpoint = Checkpoint::capture(model, stage, rng, cfg.teacher);
    if (!cfg.out_dir.empty()) {
      const auto dir = cfg.out_dir / ("stage" + std::to_string(stage));
      result.final_checkpoint.save(dir);
      write_loss_log(cfg.out_dir / ("losses_stage" + std::to_string(stage) + ".tsv"), result.reports.back());
      result.checkpoints.push_back(dir);
    }
  }
  return result;
}

const TaskMetrics* EvalResult::find(Task t) const {
  for (const auto& m : per_task)
    if (m.task == t) return &m;
  return nullptr;
}

EvalResult evaluate(const VideoLanguageModel& model, std::span<const SyntheticSample> data, int eos) {
  std::vector<TaskMetrics> by_task(all_tasks().size());
  EvalResult r;
  const int T = model.config().T_max;
  for (const auto& s : data) {
    const VideoClip clip = s.clip.T == T ? s.clip : sample_frames(s.clip, T);
    const auto out = model.generate(clip, s.question, static_cast<int>(s.answer.size()), eos);
    const bool ok = out == s.answer;
    auto& m = by_task[static_cast<std::size_t>(s.task)];
    m.task = s.task;
    ++m.count;
    m.correct += ok;
    ++r.count;
    r.correct += ok;
  }
  for (const auto& m : by_task)
    if (m.count) r.per_task.push_back(m);
  return r;
}

}  // namespace stvl
