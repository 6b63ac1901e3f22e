// SPDX-License-Identifier: Apache-2.0
#include "stvl/lm.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "stvl/errors.hpp"
#include "stvl/ops.hpp"
#include "stvl/params.hpp"

namespace stvl {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\n") != std::string::npos)
      throw DataError("vocabulary token " + std::to_string(i) + " is empty or contains whitespace");
    for (std::size_t j = 0; j < i; ++j)
      if (tokens_[j] == tokens_[i]) throw DataError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

Vocabulary Vocabulary::synthetic() {
  return Vocabulary({"<pad>", "<bos>", "<eos>", "<unk>", "Q:", "A:", "?", "what", "color", "is", "the",
                     "square", "how", "many", "squares", "are", "there", "which", "direction", "does", "move",
                     "flashes", "first", "red", "green", "blue", "yellow", "one", "two", "three", "four", "left",
                     "right", "up", "down"});
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path.string());
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    toks.push_back(line);
  }
  return Vocabulary(std::move(toks));
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

int Vocabulary::id(std::string_view token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i)
    if (tokens_[i] == token) return static_cast<int>(i);
  throw std::out_of_range("token '" + std::string(token) + "' not in vocabulary");
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> ids;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto b = text.find_first_not_of(" \t\n", pos);
    if (b == std::string_view::npos) break;
    auto e = text.find_first_of(" \t\n", b);
    if (e == std::string_view::npos) e = text.size();
    ids.push_back(id(text.substr(b, e - b)));
    pos = e;
  }
  return ids;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (int i : ids) out += (out.empty() ? "" : " ") + token(i);
  return out;
}

ToyLmParams ToyLmParams::init(const ModelConfig& cfg, Rng& rng) {
  const Index d = cfg.d_lm, ff = static_cast<Index>(cfg.lm_ff_mult) * cfg.d_lm, V = cfg.vocab_size;
  ToyLmParams p;
  p.tok_emb = init_uniform({V, d}, d, rng);
  p.pos_emb = init_uniform({cfg.lm_context, d}, 4 * d, rng);
  for (int l = 0; l < cfg.lm_layers; ++l) {
    LmBlockParams b;
    b.ln1_g = init_constant({d}, 1.0);
    b.ln1_b = init_constant({d}, 0.0);
    b.wq = init_uniform({d, d}, d, rng);
    b.wk = init_uniform({d, d}, d, rng);
    b.wv = init_uniform({d, d}, d, rng);
    b.wo = init_uniform({d, d}, d, rng);
    b.ln2_g = init_constant({d}, 1.0);
    b.ln2_b = init_constant({d}, 0.0);
    b.ff1_w = init_uniform({d, ff}, d, rng);
    b.ff1_b = init_constant({ff}, 0.0);
    b.ff2_w = init_uniform({ff, d}, ff, rng);
    b.ff2_b = init_constant({d}, 0.0);
    p.blocks.push_back(std::move(b));
  }
  p.lnf_g = init_constant({d}, 1.0);
  p.lnf_b = init_constant({d}, 0.0);
  p.head = init_uniform({d, V}, d, rng);
  p.n_heads = cfg.lm_heads;
  return p;
}

OutputPartition lm_forward(const ToyLmParams& params, const Tensor& visual, std::span<const int> text_ids) {
  const Index d = params.d_model();
  const Index M = visual.rows(), N = static_cast<Index>(text_ids.size()), L = M + N;
  if (visual.cols() != d) throw ShapeError("lm_forward: visual width " + std::to_string(visual.cols()) + " != d_lm");
  if (M < 1) throw ShapeError("lm_forward: need at least one visual token");
  if (L > params.context())
    throw std::length_error("lm_forward: sequence of " + std::to_string(L) + " exceeds context " +
                            std::to_string(params.context()));
  std::vector<Index> ids(text_ids.begin(), text_ids.end());
  for (Index t : ids)
    if (t < 0 || t >= params.vocab()) throw std::out_of_range("lm_forward: token id " + std::to_string(t));

  Tensor x = visual.reshape({M, d});
  if (N > 0) {
    const Tensor parts[] = {x, gather_rows(params.tok_emb, ids)};
    x = concat_rows(parts);
  }
  std::vector<Index> positions(static_cast<std::size_t>(L));
  std::iota(positions.begin(), positions.end(), Index{0});
  x = add(x, gather_rows(params.pos_emb, positions));

  AttentionPattern causal;
  for (Index i = 0; i < L; ++i) causal.add_row(i, std::span<const Index>(positions).first(static_cast<std::size_t>(i + 1)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(d / params.n_heads));

  for (const auto& b : params.blocks) {
    const Tensor h = layer_norm(x, b.ln1_g, b.ln1_b);
    const Tensor att = attention(matmul(h, b.wq), matmul(h, b.wk), matmul(h, b.wv), causal, params.n_heads, scale);
    x = add(x, matmul(att, b.wo));
    const Tensor h2 = layer_norm(x, b.ln2_g, b.ln2_b);
    x = add(x, linear(gelu(linear(h2, b.ff1_w, b.ff1_b)), b.ff2_w, b.ff2_b));
  }
  const Tensor hidden = layer_norm(x, params.lnf_g, params.lnf_b);

  OutputPartition out;
  std::vector<Index> vis(static_cast<std::size_t>(M));
  std::iota(vis.begin(), vis.end(), Index{0});
  out.v_pred = gather_rows(hidden, vis);
  // Rows M-1 .. L-1 predict text token 0 .. N-1 and then the next token.
  std::vector<Index> pred_rows(static_cast<std::size_t>(N + 1));
  std::iota(pred_rows.begin(), pred_rows.end(), M - 1);
  const Tensor logits = matmul(gather_rows(hidden, pred_rows), params.head);
  std::vector<Index> last{N};
  out.next_logits = gather_rows(logits, last);
  if (N > 0) {
    std::vector<Index> first(static_cast<std::size_t>(N));
    std::iota(first.begin(), first.end(), Index{0});
    out.other_logits = gather_rows(logits, first);
  }
  out.text_targets.assign(text_ids.begin(), text_ids.end());
  return out;
}

}  // namespace stvl
