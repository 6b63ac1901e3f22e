// SPDX-License-Identifier: Apache-2.0
//
// The full video-language stack: patch embedding, local spatio-temporal
// encoding, learned downsampling, frame/global aggregation with fusion,
// token sequencing and the toy LM, wired according to a Switches set.
#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stvl/aggregators.hpp"
#include "stvl/config.hpp"
#include "stvl/lm.hpp"
#include "stvl/lsd.hpp"
#include "stvl/lste.hpp"
#include "stvl/params.hpp"
#include "stvl/sequencer.hpp"
#include "stvl/switches.hpp"
#include "stvl/video.hpp"

namespace stvl {

struct StabParams {
  PatchEmbedParams patch;
  LsteParams lste;
  LsdParams lsd;
  FsraParams fsra;
  GstraParams gstra;
  FusionParams fusion;
};

// Intermediate results of one visual forward pass.
struct StabTrace {
  PatchGrid patches;
  PatchGrid encoded;        // after LSTE (or the pass-through under no_lste)
  PatchGrid down;           // tokens that enter the sequence
  PatchGrid global_tokens;  // tokens GSTRA attends over
  FrameContext context;
};

class VideoLanguageModel {
 public:
  explicit VideoLanguageModel(ModelConfig cfg, Switches switches = {});

  // Copies share nothing.
  VideoLanguageModel(const VideoLanguageModel& other);
  VideoLanguageModel& operator=(const VideoLanguageModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  const Switches& switches() const { return switches_; }
  void set_switches(const Switches& s) { switches_ = s; }

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // Pads to a multiple of 2p (and halves resolution under half_resolution).
  VideoClip prepare(const VideoClip& clip) const;

  VisualTokenSequence encode(const VideoClip& clip, StabTrace* trace = nullptr) const;
  OutputPartition forward(const VideoClip& clip, std::span<const int> text_ids,
                          VisualTokenSequence* sequence = nullptr) const;
  // Greedy decoding; stops after `eos` or max_new tokens. The returned ids
  // include the eos when produced.
  std::vector<int> generate(const VideoClip& clip, std::span<const int> prompt, int max_new, int eos) const;

  StabParams stab;
  SequencerParams sequencer;
  ToyLmParams lm;

 private:
  void register_params();
  void for_each_param(const std::function<void(const std::string&, const std::string&, Tensor&)>& f);

  ModelConfig cfg_;
  Switches switches_;
  ParamStore store_;
};

}  // namespace stvl
