// SPDX-License-Identifier: Apache-2.0
//
// Tiny pre-norm decoder-only transformer standing in for a pretrained
// language model, plus the whitespace tokenizer for the synthetic grammar.
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stvl/config.hpp"
#include "stvl/rng.hpp"
#include "stvl/tensor.hpp"

namespace stvl {

class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  // Fixed word list covering every question/answer template.
  static Vocabulary synthetic();
  // One token per line; line number = id.
  static Vocabulary load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  int id(std::string_view token) const;  // throws std::out_of_range
  const std::string& token(int id) const;
  std::vector<int> encode(std::string_view text) const;
  std::string decode(std::span<const int> ids) const;
  int eos() const { return id("<eos>"); }

  const std::vector<std::string>& tokens() const { return tokens_; }
  bool operator==(const Vocabulary&) const = default;

 private:
  std::vector<std::string> tokens_;
};

struct LmBlockParams {
  Tensor ln1_g, ln1_b;
  Tensor wq, wk, wv, wo;  // [d_lm, d_lm]
  Tensor ln2_g, ln2_b;
  Tensor ff1_w, ff1_b;  // [d_lm, ff], [ff]
  Tensor ff2_w, ff2_b;  // [ff, d_lm], [d_lm]
};

struct ToyLmParams {
  Tensor tok_emb;  // [vocab, d_lm]
  Tensor pos_emb;  // [context, d_lm]
  std::vector<LmBlockParams> blocks;
  Tensor lnf_g, lnf_b;
  Tensor head;  // [d_lm, vocab]
  int n_heads = 1;

  static ToyLmParams init(const ModelConfig& cfg, Rng& rng);
  Index d_model() const { return tok_emb.dim(1); }
  Index vocab() const { return tok_emb.dim(0); }
  Index context() const { return pos_emb.dim(0); }
};

// LM outputs split into the visual-position hidden states and the text
// predictions. other_logits row j scores text_targets[j] given everything
// before it; next_logits scores the token after the last input.
struct OutputPartition {
  Tensor v_pred;        // [M, d_lm]
  Tensor other_logits;  // [N_text, vocab]; undefined when N_text == 0
  Tensor next_logits;   // [1, vocab]
  std::vector<int> text_targets;
};

// Visual tokens [M, d_lm] are prepended to the embedded text ids. Throws
// std::length_error when M + N_text exceeds the context.
OutputPartition lm_forward(const ToyLmParams& params, const Tensor& visual, std::span<const int> text_ids);

}  // namespace stvl
