#include "nner/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace nner {

void ModelConfig::validate() const {
  if (encoder_dim < 1 || hidden < 1 || feat < 1 || heads < 1 || len_embed_dim < 1 ||
      types < 1 || max_offset < 1) {
    throw ConfigError("model config: all extents must be at least 1");
  }
  if (hidden % heads != 0) {
    throw ConfigError(str("model config: hidden size ", hidden, " not divisible by ", heads,
                          " heads"));
  }
  if (feat % heads != 0) {
    throw ConfigError(str("model config: feature size ", feat, " not divisible by ", heads,
                          " heads"));
  }
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(str("model config: kernel size must be odd, got ", kernel));
  }
  if (cnn_blocks < 0 || vocab < 0 || mixer_layers < 0) {
    throw ConfigError("model config: negative counts");
  }
  if (ln_eps <= 0) throw ConfigError("model config: ln_eps must be positive");
}

template <class Real>
Params<Real> make_params(const ModelConfig& cfg) {
  cfg.validate();
  Params<Real> p;
  if (cfg.vocab > 0) {
    p.embed = Tensor<Real>::param({cfg.vocab + 1, cfg.encoder_dim});
    for (int64_t i = 0; i < cfg.mixer_layers; ++i) {
      p.mixers.push_back(Tensor<Real>::param({3, cfg.encoder_dim, cfg.encoder_dim}));
    }
  }
  p.w_start = Tensor<Real>::param({cfg.encoder_dim, cfg.hidden});
  p.w_end = Tensor<Real>::param({cfg.encoder_dim, cfg.hidden});
  p.len_embed = Tensor<Real>::param({2 * cfg.max_offset + 1, cfg.len_embed_dim});
  p.concat_w = Tensor<Real>::param({2 * cfg.hidden + cfg.len_embed_dim, cfg.feat});
  const int64_t hk = cfg.hidden / cfg.heads;
  const int64_t rk = cfg.feat / cfg.heads;
  p.bilinear_u = Tensor<Real>::param({cfg.heads, hk, rk, hk});
  for (int64_t i = 0; i < cfg.cnn_blocks; ++i) {
    typename Params<Real>::Block b;
    b.kernel = Tensor<Real>::param({cfg.kernel, cfg.kernel, cfg.feat, cfg.feat});
    b.gamma = Tensor<Real>::param({cfg.feat});
    b.beta = Tensor<Real>::param({cfg.feat});
    p.blocks.push_back(std::move(b));
  }
  if (cfg.cnn_blocks > 0) {
    p.final_kernel = Tensor<Real>::param({cfg.kernel, cfg.kernel, cfg.feat, cfg.feat});
  }
  p.out_w = Tensor<Real>::param({cfg.types, cfg.feat});
  p.out_b = Tensor<Real>::param({cfg.types});
  return p;
}

namespace {

template <class Real>
void fill_uniform_sym(Tensor<Real>& t, Rng& rng, double limit) {
  for (auto& v : t.values()) v = static_cast<Real>(rng.uniform(-limit, limit));
}

template <class Real>
void fill_normal(Tensor<Real>& t, Rng& rng, double stddev) {
  for (auto& v : t.values()) v = static_cast<Real>(rng.normal(0.0, stddev));
}

double glorot(int64_t fan_in, int64_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace

template <class Real>
Params<Real> init_params(const ModelConfig& cfg, uint64_t seed) {
  Params<Real> p = make_params<Real>(cfg);
  Rng rng(seed);
  const int64_t d = cfg.encoder_dim, h = cfg.hidden, r = cfg.feat, c = cfg.len_embed_dim;
  const int64_t hk = h / cfg.heads;
  const int64_t k2 = cfg.kernel * cfg.kernel;
  if (p.embed.defined()) {
    fill_normal(p.embed, rng, 0.02);
    for (auto& m : p.mixers) fill_uniform_sym(m, rng, glorot(3 * d, 3 * d));
  }
  fill_uniform_sym(p.w_start, rng, glorot(d, h));
  fill_uniform_sym(p.w_end, rng, glorot(d, h));
  fill_normal(p.len_embed, rng, 0.02);
  fill_uniform_sym(p.concat_w, rng, glorot(2 * h + c, r));
  fill_uniform_sym(p.bilinear_u, rng, glorot(hk, hk));
  for (auto& b : p.blocks) {
    fill_uniform_sym(b.kernel, rng, glorot(k2 * r, k2 * r));
    std::fill(b.gamma.values().begin(), b.gamma.values().end(), Real(1));
    // beta stays zero
  }
  if (p.final_kernel.defined()) fill_uniform_sym(p.final_kernel, rng, glorot(k2 * r, k2 * r));
  fill_uniform_sym(p.out_w, rng, glorot(r, cfg.types));
  // out_b stays zero
  return p;
}

Vocab Vocab::build(const std::vector<std::vector<std::string>>& sentences) {
  std::set<std::string> uniq;
  for (const auto& s : sentences) uniq.insert(s.begin(), s.end());
  Vocab v;
  v.tokens.assign(uniq.begin(), uniq.end());
  for (size_t i = 0; i < v.tokens.size(); ++i) {
    v.index[v.tokens[i]] = static_cast<int64_t>(i) + 1;
  }
  return v;
}

template <class Real>
Tensor<Real> encode_tokens_toy(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                               const std::vector<int64_t>& ids) {
  if (!p.embed.defined()) {
    throw ContractError("encode_tokens_toy: model was built without a vocabulary");
  }
  (void)cfg;
  Tensor<Real> x = embedding_lookup(g, p.embed, ids);
  for (const auto& mixer : p.mixers) {
    x = add(g, x, activation(g, conv1d_tokens(g, x, mixer), Act::Gelu));
  }
  return x;
}

template <class Real>
Tensor<Real> encode_tokens_pieces(Graph<Real>* g, const Tensor<Real>& pieces,
                                  const Groups& word_pieces) {
  return piecewise_max_pool(g, pieces, word_pieces);
}

template <class Real>
std::pair<Tensor<Real>, Tensor<Real>> project_start_end(Graph<Real>* g, const Tensor<Real>& h,
                                                        const Params<Real>& p,
                                                        const ModelConfig& cfg) {
  const Real slope = static_cast<Real>(cfg.leaky_slope);
  auto hs = activation(g, matmul(g, h, p.w_start), Act::LeakyRelu, slope);
  auto he = activation(g, matmul(g, h, p.w_end), Act::LeakyRelu, slope);
  return {hs, he};
}

template <class Real>
SpanGrid<Real> multi_head_biaffine(Graph<Real>* g, const Tensor<Real>& hs, const Tensor<Real>& he,
                                   const Mask& mask, const Params<Real>& p,
                                   const ModelConfig& cfg) {
  const int64_t h = cfg.hidden, c = cfg.len_embed_dim;
  // concatenation path, via the three row blocks of W
  auto start_rows = matmul(g, hs, slice_rows(g, p.concat_w, 0, h));
  auto end_rows = matmul(g, he, slice_rows(g, p.concat_w, h, h));
  auto len_rows = matmul(g, p.len_embed, slice_rows(g, p.concat_w, 2 * h, c));
  auto s1 = grid_from_rows(g, start_rows, end_rows, len_rows, cfg.max_offset);
  // per-head bilinear path
  auto s2 = mh_bilinear_grid(g, hs, he, p.bilinear_u);
  SpanGrid<Real> grid;
  grid.values = apply_mask(g, add(g, s1, s2), mask);
  grid.mask = mask;
  return grid;
}

template <class Real>
SpanGrid<Real> cnn_refine(Graph<Real>* g, const SpanGrid<Real>& r, const Params<Real>& p,
                          const ModelConfig& cfg) {
  if (cfg.cnn_blocks < 1 || p.blocks.empty()) {
    throw ContractError("cnn_refine: model has no CNN blocks");
  }
  const Real eps = static_cast<Real>(cfg.ln_eps);
  Tensor<Real> x = r.values;
  for (const auto& block : p.blocks) {
    auto conv = conv2d_zero_pad(g, x, block.kernel, r.mask);
    auto normed = layer_norm_feature(g, add(g, conv, x), block.gamma, block.beta, eps);
    // LayerNorm maps zero cells to beta, so the mask must be re-applied
    x = apply_mask(g, activation(g, normed, Act::Gelu), r.mask);
  }
  SpanGrid<Real> out;
  out.values = conv2d_zero_pad(g, x, p.final_kernel, r.mask);
  out.mask = r.mask;
  return out;
}

template <class Real>
Tensor<Real> output_logits(Graph<Real>* g, const SpanGrid<Real>& r, const SpanGrid<Real>* refined,
                           const Params<Real>& p) {
  Tensor<Real> base = refined ? add(g, r.values, refined->values) : r.values;
  return bias_add_last(g, matmul_nt(g, base, p.out_w), p.out_b);
}

namespace {

template <class Real>
Forward<Real> forward_from_rows(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                                const std::vector<Tensor<Real>>& token_reps,
                                const ForwardOptions& opt) {
  if (opt.dropout > 0.0 && opt.rng == nullptr) {
    throw ContractError("forward: dropout requires an rng");
  }
  Forward<Real> f;
  f.lens.reserve(token_reps.size());
  int64_t n = 0;
  for (const auto& t : token_reps) {
    f.lens.push_back(t.dim(0));
    n = std::max(n, t.dim(0));
  }
  f.mask = Mask::from_lengths(n, f.lens);
  auto padded = pad_stack(g, token_reps, n);
  auto [hs, he] = project_start_end(g, padded, p, cfg);
  if (opt.dropout > 0.0) {
    hs = dropout(g, hs, static_cast<Real>(opt.dropout), *opt.rng);
    he = dropout(g, he, static_cast<Real>(opt.dropout), *opt.rng);
  }
  f.span = multi_head_biaffine(g, hs, he, f.mask, p, cfg);
  if (cfg.cnn_blocks > 0) {
    f.refined = cnn_refine(g, f.span, p, cfg);
    f.logits = output_logits(g, f.span, &f.refined, p);
  } else {
    f.logits = output_logits<Real>(g, f.span, nullptr, p);
  }
  if (opt.want_probs) f.probs = activation(g, f.logits, Act::Sigmoid);
  return f;
}

}  // namespace

template <class Real>
Forward<Real> forward_ids(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                          const std::vector<std::vector<int64_t>>& batch_ids,
                          const ForwardOptions& opt) {
  std::vector<Tensor<Real>> reps;
  reps.reserve(batch_ids.size());
  for (const auto& ids : batch_ids) reps.push_back(encode_tokens_toy(g, p, cfg, ids));
  return forward_from_rows(g, p, cfg, reps, opt);
}

template <class Real>
Forward<Real> forward_embedded(Graph<Real>* g, const Params<Real>& p, const ModelConfig& cfg,
                               const std::vector<Tensor<Real>>& token_reps,
                               const ForwardOptions& opt) {
  for (const auto& t : token_reps) {
    if (t.rank() != 2 || t.dim(1) != cfg.encoder_dim) {
      throw DimensionError(str("forward_embedded: token representation ", shape_str(t.shape()),
                               " does not match encoder dim ", cfg.encoder_dim));
    }
  }
  return forward_from_rows(g, p, cfg, token_reps, opt);
}

#define NNER_INSTANTIATE_MODEL(Real)                                                          \
  template Params<Real> make_params<Real>(const ModelConfig&);                                \
  template Params<Real> init_params<Real>(const ModelConfig&, uint64_t);                      \
  template Tensor<Real> encode_tokens_toy<Real>(Graph<Real>*, const Params<Real>&,            \
                                                const ModelConfig&,                           \
                                                const std::vector<int64_t>&);                 \
  template Tensor<Real> encode_tokens_pieces<Real>(Graph<Real>*, const Tensor<Real>&,         \
                                                   const Groups&);                            \
  template std::pair<Tensor<Real>, Tensor<Real>> project_start_end<Real>(                     \
      Graph<Real>*, const Tensor<Real>&, const Params<Real>&, const ModelConfig&);            \
  template SpanGrid<Real> multi_head_biaffine<Real>(Graph<Real>*, const Tensor<Real>&,        \
                                                    const Tensor<Real>&, const Mask&,         \
                                                    const Params<Real>&, const ModelConfig&); \
  template SpanGrid<Real> cnn_refine<Real>(Graph<Real>*, const SpanGrid<Real>&,               \
                                           const Params<Real>&, const ModelConfig&);          \
  template Tensor<Real> output_logits<Real>(Graph<Real>*, const SpanGrid<Real>&,              \
                                            const SpanGrid<Real>*, const Params<Real>&);      \
  template Forward<Real> forward_ids<Real>(Graph<Real>*, const Params<Real>&,                 \
                                           const ModelConfig&,                                \
                                           const std::vector<std::vector<int64_t>>&,          \
                                           const ForwardOptions&);                            \
  template Forward<Real> forward_embedded<Real>(Graph<Real>*, const Params<Real>&,            \
                                                const ModelConfig&,                           \
                                                const std::vector<Tensor<Real>>&,             \
                                                const ForwardOptions&);

NNER_INSTANTIATE_MODEL(float)
NNER_INSTANTIATE_MODEL(double)

#undef NNER_INSTANTIATE_MODEL

}  // namespace nner
