// SPDX-License-Identifier: Apache-2.0
#include "stvl/model.hpp"

#include <algorithm>

#include "stvl/errors.hpp"

namespace stvl {

VideoLanguageModel::VideoLanguageModel(ModelConfig cfg, Switches switches)
    : cfg_(std::move(cfg)), switches_(switches) {
  cfg_.validate();
  Rng rng(Rng::derive(cfg_.seed, 0x5eed));
  stab.patch = PatchEmbedParams::init(cfg_, rng);
  stab.lste = LsteParams::init(cfg_, rng);
  stab.lsd = LsdParams::init(cfg_, rng);
  stab.fsra = FsraParams::init(cfg_, rng);
  stab.gstra = GstraParams::init(cfg_, rng);
  stab.fusion = FusionParams::init(cfg_, rng);
  sequencer = SequencerParams::init(cfg_, rng);
  lm = ToyLmParams::init(cfg_, rng);
  register_params();
}

VideoLanguageModel::VideoLanguageModel(const VideoLanguageModel& other)
    : stab(other.stab), sequencer(other.sequencer), lm(other.lm), cfg_(other.cfg_), switches_(other.switches_) {
  // Member-wise copy shares nodes with `other`; detach every parameter.
  for_each_param([](const std::string&, const std::string&, Tensor& t) {
    auto v = t.data();
    t = Tensor::parameter(t.shape(), std::vector<double>(v.begin(), v.end()));
  });
  register_params();
  for (std::size_t i = 0; i < store_.entries().size(); ++i)
    store_.entries()[i].frozen = other.store_.entries()[i].frozen;
}

void VideoLanguageModel::for_each_param(const std::function<void(const std::string&, const std::string&, Tensor&)>& f) {
  f("patch_embed.weight", "patch_embed", stab.patch.weight);
  f("patch_embed.bias", "patch_embed", stab.patch.bias);
  f("lste.conv1_w", "lste", stab.lste.conv1_w);
  f("lste.conv1_b", "lste", stab.lste.conv1_b);
  f("lste.conv2_w", "lste", stab.lste.conv2_w);
  f("lste.conv2_b", "lste", stab.lste.conv2_b);
  f("lste.conv3_w", "lste", stab.lste.conv3_w);
  f("lste.conv3_b", "lste", stab.lste.conv3_b);
  f("lste.dpe_w", "lste", stab.lste.dpe_w);
  f("lste.dpe_b", "lste", stab.lste.dpe_b);
  f("lsd.queries", "lsd", stab.lsd.queries);
  f("lsd.wq", "lsd", stab.lsd.attn.wq);
  f("lsd.wk", "lsd", stab.lsd.attn.wk);
  f("lsd.wv", "lsd", stab.lsd.attn.wv);
  f("fsra.frame_queries", "fsra", stab.fsra.frame_queries);
  f("fsra.wq", "fsra", stab.fsra.attn.wq);
  f("fsra.wk", "fsra", stab.fsra.attn.wk);
  f("fsra.wv", "fsra", stab.fsra.attn.wv);
  f("gstra.global_query", "gstra", stab.gstra.global_query);
  f("gstra.wq", "gstra", stab.gstra.attn.wq);
  f("gstra.wk", "gstra", stab.gstra.attn.wk);
  f("gstra.wv", "gstra", stab.gstra.attn.wv);
  f("fusion.alpha", "fusion", stab.fusion.alpha);
  f("fusion.proj_w", "fusion", stab.fusion.proj_w);
  f("fusion.proj_b", "fusion", stab.fusion.proj_b);
  f("sequencer.row_token", "sequencer", sequencer.row_token);
  f("sequencer.mlp1_w", "sequencer", sequencer.mlp1_w);
  f("sequencer.mlp1_b", "sequencer", sequencer.mlp1_b);
  f("sequencer.mlp2_w", "sequencer", sequencer.mlp2_w);
  f("sequencer.mlp2_b", "sequencer", sequencer.mlp2_b);
  f("lm.tok_emb", "lm", lm.tok_emb);
  f("lm.pos_emb", "lm", lm.pos_emb);
  for (std::size_t l = 0; l < lm.blocks.size(); ++l) {
    auto& b = lm.blocks[l];
    const std::string pre = "lm.block" + std::to_string(l) + ".";
    f(pre + "ln1_g", "lm", b.ln1_g);
    f(pre + "ln1_b", "lm", b.ln1_b);
    f(pre + "wq", "lm", b.wq);
    f(pre + "wk", "lm", b.wk);
    f(pre + "wv", "lm", b.wv);
    f(pre + "wo", "lm", b.wo);
    f(pre + "ln2_g", "lm", b.ln2_g);
    f(pre + "ln2_b", "lm", b.ln2_b);
    f(pre + "ff1_w", "lm", b.ff1_w);
    f(pre + "ff1_b", "lm", b.ff1_b);
    f(pre + "ff2_w", "lm", b.ff2_w);
    f(pre + "ff2_b", "lm", b.ff2_b);
  }
  f("lm.lnf_g", "lm", lm.lnf_g);
  f("lm.lnf_b", "lm", lm.lnf_b);
  f("lm.head", "lm", lm.head);
}

void VideoLanguageModel::register_params() {
  store_ = ParamStore();
  for_each_param([this](const std::string& name, const std::string& module, Tensor& t) { store_.add(name, module, t); });
}

VideoClip VideoLanguageModel::prepare(const VideoClip& clip) const {
  clip.validate(cfg_);
  if (switches_.downsampling == Downsampling::half_resolution) {
    const VideoClip even = pad_to_multiple(clip, 2);
    return pad_to_multiple(half_resolution(even), cfg_.p);
  }
  return pad_to_multiple(clip, 2 * cfg_.p);
}

VisualTokenSequence VideoLanguageModel::encode(const VideoClip& clip, StabTrace* trace) const {
  const VideoClip input = prepare(clip);
  if (input.H > cfg_.H_max || input.W > cfg_.W_max) throw ShapeError("encode: padded clip exceeds H_max/W_max");
  const Switches& sw = switches_;
  auto encode_local = [&](const PatchGrid& g) {
    return sw.no_lste ? g : lste_forward(g, stab.lste, cfg_.lste_activation);
  };
  auto downsample = [&](const PatchGrid& g) {
    switch (sw.downsampling) {
      case Downsampling::avg_pool: return avg_pool_forward(g);
      case Downsampling::resampler: return resampler_forward(g, stab.lsd);
      case Downsampling::half_resolution: return g;
      case Downsampling::lsd: break;
    }
    return lsd_forward(g, stab.lsd);
  };

  StabTrace local;
  StabTrace& tr = trace ? *trace : local;
  tr.patches = patchify(input, stab.patch, cfg_.p);
  if (sw.lsd_before_lste) {
    tr.encoded = encode_local(downsample(tr.patches));
    tr.down = tr.encoded;
    tr.global_tokens = tr.encoded;
  } else {
    tr.encoded = encode_local(tr.patches);
    tr.down = downsample(tr.encoded);
    tr.global_tokens = sw.gstra_pre_lsd ? tr.encoded : tr.down;
  }
  tr.context = aggregate(tr.down, tr.global_tokens, stab.fsra, stab.gstra, stab.fusion, sw.no_fsra, sw.no_gstra);
  return build_sequence(tr.down, tr.context, sequencer, sw.no_row);
}

OutputPartition VideoLanguageModel::forward(const VideoClip& clip, std::span<const int> text_ids,
                                            VisualTokenSequence* sequence) const {
  VisualTokenSequence seq = encode(clip);
  OutputPartition out = lm_forward(lm, seq.tokens, text_ids);
  if (sequence) *sequence = std::move(seq);
  return out;
}

std::vector<int> VideoLanguageModel::generate(const VideoClip& clip, std::span<const int> prompt, int max_new,
                                              int eos) const {
  NoGradGuard no_grad;
  const VisualTokenSequence seq = encode(clip);
  std::vector<int> ids(prompt.begin(), prompt.end());
  std::vector<int> out;
  for (int step = 0; step < max_new; ++step) {
    const OutputPartition o = lm_forward(lm, seq.tokens, ids);
    const auto logits = o.next_logits.data();
    const int next = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    out.push_back(next);
    if (next == eos) break;
    ids.push_back(next);
  }
  return out;
}

}  // namespace stvl
