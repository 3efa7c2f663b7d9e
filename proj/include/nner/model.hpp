#pragma once

#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nner/tensor.hpp"

namespace nner {

// Model-wide sizes. `feat` is both the biaffine feature size and the CNN
// channel count; the residual connection and the output head force them to
// be the same width.
struct ModelConfig {
  int64_t encoder_dim = 64;    // d: token representation width
  int64_t hidden = 64;         // h: start/end projection width, split across heads
  int64_t feat = 32;           // r: span feature / CNN channel width
  int64_t heads = 2;           // K
  int64_t len_embed_dim = 16;  // c: span length embedding width
  int64_t max_offset = 64;     // L: i-j is clamped to [-L, L]
  int64_t cnn_blocks = 2;      // 0 disables the CNN refiner entirely
  int64_t kernel = 3;
  int64_t types = 3;           // |T|
  int64_t vocab = 0;           // toy-encoder vocabulary size (excl. UNK); 0 = embeddings fed in
  int64_t mixer_layers = 2;    // toy-encoder context convolutions
  double leaky_slope = 0.01;
  double ln_eps = 1e-5;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// All learnable arrays. Copies are shallow (tensors share storage).
template <class Real>
struct Params {
  // toy encoder; absent (undefined tensors) when cfg.vocab == 0
  Tensor<Real> embed;                // [vocab+1, d]; row 0 is UNK
  std::vector<Tensor<Real>> mixers;  // mixer_layers x [3, d, d]

  Tensor<Real> w_start;  // [d, h]
  Tensor<Real> w_end;    // [d, h]

  Tensor<Real> len_embed;   // [2L+1, c]
  Tensor<Real> concat_w;    // [2h+c, r]
  Tensor<Real> bilinear_u;  // [K, h/K, r/K, h/K]

  struct Block {
    Tensor<Real> kernel;  // [k, k, r, r], bias-free
    Tensor<Real> gamma;   // [r]
    Tensor<Real> beta;    // [r]
  };
  std::vector<Block> blocks;  // absent when cnn_blocks == 0
  Tensor<Real> final_kernel;  // [k, k, r, r]; the trailing conv after the blocks

  Tensor<Real> out_w;  // [|T|, r]
  Tensor<Real> out_b;  // [|T|]

  // Visits every parameter with its persistent name, in a fixed order.
  template <class Fn>
  void for_each(Fn&& fn) const {
    if (embed.defined()) {
      fn("enc.embed", embed);
      for (size_t i = 0; i < mixers.size(); ++i) fn(str("enc.mix", i), mixers[i]);
    }
    fn("proj.start", w_start);
    fn("proj.end", w_end);
    fn("biaffine.len_embed", len_embed);
    fn("biaffine.w", concat_w);
    fn("biaffine.u", bilinear_u);
    for (size_t i = 0; i < blocks.size(); ++i) {
      fn(str("cnn.block", i, ".kernel"), blocks[i].kernel);
      fn(str("cnn.block", i, ".gamma"), blocks[i].gamma);
      fn(str("cnn.block", i, ".beta"), blocks[i].beta);
    }
    if (final_kernel.defined()) fn("cnn.final", final_kernel);
    fn("out.w", out_w);
    fn("out.b", out_b);
  }

  std::vector<Tensor<Real>> all() const {
    std::vector<Tensor<Real>> out;
    for_each([&](const std::string&, const Tensor<Real>& t) { out.push_back(t); });
    return out;
  }

  void zero_grads() const {
    for_each([](const std::string&, const Tensor<Real>& t) { t.zero_grad(); });
  }
};

// Zero-valued parameter set with the shapes implied by cfg.
template <class Real>
Params<Real> make_params(const ModelConfig& cfg);

// Glorot-uniform matrices/kernels, normal(0, 0.02) embedding tables, unit
// gamma, zero beta/bias; ordered draws so a seed pins every value.
template <class Real>
Params<Real> init_params(const ModelConfig& cfg, uint64_t seed);

// Token ids for the toy encoder. Id 0 is the reserved UNK row.
struct Vocab {
  std::vector<std::string> tokens;  // ids 1..tokens.size()
  std::unordered_map<std::string, int64_t> index;

  static Vocab build(const std::vector<std::vector<std::string>>& sentences);
  int64_t encode(const std::string& tok) const {
    auto it = index.find(tok);
    return it == index.end() ? 0 : it->second;
  }
  std::vector<int64_t> encode_all(const std::vector<std::string>& toks) const {
    std::vector<int64_t> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(encode(t));
    return ids;
  }
  int64_t rows() const { return static_cast<int64_t>(tokens.size()) + 1; }
};

// The n x n x r span feature grid plus its validity mask. Values at
// mask-false cells are exactly zero.
template <class Real>
struct SpanGrid {
  Tensor<Real> values;  // [batch, n, n, r]
  Mask mask;
};

// Trainable toy encoder: embedding rows, then residual context mixers.
template <class Real>
Tensor<Real> encode_tokens_toy(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                               const std::vector<int64_t>& ids);

// Pass-through encoder: max-pools word pieces into word rows.
template <class Real>
Tensor<Real> encode_tokens_pieces(Graph<Real>* g, const Tensor<Real>& pieces,
                                  const Groups& word_pieces);

// H -> (LeakyReLU(H W_s), LeakyReLU(H W_e)). H may be [n,d] or [batch,n,d].
template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> project_start_end(Graph<Real>* g, const Tensor<Real>& h,
                                                        const Params<Real>& p,
                                                        const ModelConfig& cfg);

// Concatenation path plus per-head bilinear path; both triangles and the
// diagonal are populated, masked cells forced to zero.
template <class Real>
SpanGrid<Real> multi_head_biaffine(Graph<Real>* g, const Tensor<Real>& hs, const Tensor<Real>& he,
                                   const Mask& mask, const Params<Real>& p,
                                   const ModelConfig& cfg);

// Repeats conv -> residual -> feature LayerNorm -> GeLU -> mask per block,
// then one trailing bias-free conv. Requires cfg.cnn_blocks >= 1.
template <class Real>
SpanGrid<Real> cnn_refine(Graph<Real>* g, const SpanGrid<Real>& r, const Params<Real>& p,
                          const ModelConfig& cfg);

// Sigmoid(W_o (R + R'') + b); pass refined = nullptr for the no-CNN variant.
template <class Real>
Tensor<Real> output_logits(Graph<Real>* g, const SpanGrid<Real>& r, const SpanGrid<Real>* refined,
                           const Params<Real>& p);

// Mean BCE over valid cells, both triangles; targets must be symmetric.
template <class Real>
Tensor<Real> bce_loss(Graph<Real>* g, const Tensor<Real>& probs, const Tensor<Real>& targets,
                      const Mask& mask) {
  return bce_mean_masked(g, probs, targets, mask);
}

template <class Real>
struct Forward {
  Mask mask;
  std::vector<int64_t> lens;
  SpanGrid<Real> span;     // biaffine grid R
  SpanGrid<Real> refined;  // R''; values undefined when cnn_blocks == 0
  Tensor<Real> logits;     // [batch, n, n, |T|]
  Tensor<Real> probs;      // sigmoid(logits); defined only when requested
};

struct ForwardOptions {
  bool want_probs = false;
  double dropout = 0.0;  // applied to the projected start/end rows when > 0
  Rng* rng = nullptr;    // required when dropout > 0
};

template <class Real>
Forward<Real> forward_ids(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                          const std::vector<std::vector<int64_t>>& batch_ids,
                          const ForwardOptions& opt = {});

// Same model on caller-provided token representations ([n_i, d] each).
template <class Real>
Forward<Real> forward_embedded(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                               const std::vector<Tensor<Real>>& token_reps,
                               const ForwardOptions& opt = {});

// Stable training loss from the forward's logits.
template <class Real>
Tensor<Real> training_loss(Graph<Real>* g, const Forward<Real>& f, const Tensor<Real>& targets) {
  return bce_logits_mean_masked(g, f.logits, targets, f.mask);
}

// ------------------------------------------------------------- checkpoint

struct CheckpointMeta {
  ModelConfig config;
  std::vector<std::string> vocab;       // toy vocabulary, id order
  std::vector<std::string> type_names;  // entity type per output channel
  std::string dtype;                    // "f32" | "f64"
  int64_t epoch = 0;                    // training progress, for resume
  int64_t step = 0;
  double best_dev_f1 = -1.0;
};

template <class Real>
struct Checkpoint {
  CheckpointMeta meta;
  Params<Real> params;
  std::map<std::string, Tensor<Real>> extras;  // optimizer state and the like
};

// Versioned binary archive of named tensors; values round-trip bit-exactly.
template <class Real>
void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const Params<Real>& params,
                     const std::map<std::string, Tensor<Real>>& extras = {});

template <class Real>
Checkpoint<Real> load_checkpoint(const std::string& path);

// Reads only the header; "f32" or "f64".
std::string checkpoint_dtype(const std::string& path);

}  // namespace nner
