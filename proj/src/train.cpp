#include "nner/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

namespace nner {

using json = nlohmann::json;

// ------------------------------------------------------------ TrainConfig

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("config: epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be at least 1");
  if (learning_rate <= 0) throw ConfigError("config: learning_rate must be positive");
  if (warmup_factor < 0 || warmup_factor >= 1) {
    throw ConfigError("config: warmup_factor must be in [0, 1)");
  }
  if (threshold <= 0 || threshold >= 1) throw ConfigError("config: threshold must be in (0, 1)");
  if (precision != "f32" && precision != "f64") {
    throw ConfigError(str("config: precision must be f32 or f64, got ", precision));
  }
  if (dropout < 0 || dropout >= 1) throw ConfigError("config: dropout must be in [0, 1)");
  if (grad_clip < 0) throw ConfigError("config: grad_clip must be nonnegative");
  if (max_train_len < 1) throw ConfigError("config: max_train_len must be positive");
  model_config(1, 1).validate();
}

ModelConfig TrainConfig::model_config(int64_t vocab, int64_t num_types) const {
  ModelConfig m;
  m.encoder_dim = encoder_dim;
  m.hidden = hidden_size;
  m.feat = cnn_channels;
  m.heads = heads;
  m.len_embed_dim = length_embed_dim;
  m.max_offset = max_offset;
  m.cnn_blocks = cnn_blocks;
  m.kernel = kernel_size;
  m.types = num_types;
  m.vocab = vocab;
  m.mixer_layers = mixer_layers;
  m.leaky_slope = leaky_slope;
  m.ln_eps = ln_eps;
  return m;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto as_i = [&]() -> int64_t {
    try {
      return std::stoll(value);
    } catch (const std::exception&) {
      throw ConfigError(str("config: ", key, " expects an integer, got '", value, "'"));
    }
  };
  auto as_d = [&]() -> double {
    try {
      return std::stod(value);
    } catch (const std::exception&) {
      throw ConfigError(str("config: ", key, " expects a number, got '", value, "'"));
    }
  };
  if (key == "epochs") epochs = as_i();
  else if (key == "learning_rate") learning_rate = as_d();
  else if (key == "batch_size") batch_size = as_i();
  else if (key == "cnn_blocks") cnn_blocks = as_i();
  else if (key == "kernel_size") kernel_size = as_i();
  else if (key == "cnn_channels") cnn_channels = as_i();
  else if (key == "heads") heads = as_i();
  else if (key == "hidden_size") hidden_size = as_i();
  else if (key == "warmup_factor") warmup_factor = as_d();
  else if (key == "length_embed_dim") length_embed_dim = as_i();
  else if (key == "max_offset") max_offset = as_i();
  else if (key == "encoder_dim") encoder_dim = as_i();
  else if (key == "mixer_layers") mixer_layers = as_i();
  else if (key == "seed") seed = static_cast<uint64_t>(as_i());
  else if (key == "precision") precision = value;
  else if (key == "threshold") threshold = as_d();
  else if (key == "weight_decay") weight_decay = as_d();
  else if (key == "beta1") beta1 = as_d();
  else if (key == "beta2") beta2 = as_d();
  else if (key == "adam_eps") adam_eps = as_d();
  else if (key == "grad_clip") grad_clip = as_d();
  else if (key == "dropout") dropout = as_d();
  else if (key == "max_train_len") max_train_len = as_i();
  else if (key == "leaky_slope") leaky_slope = as_d();
  else if (key == "ln_eps") ln_eps = as_d();
  else throw ConfigError(str("config: unknown key '", key, "'"));
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(str("cannot open config: ", path));
  TrainConfig cfg;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto strip = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      const auto b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    const std::string body = strip(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(str(path, " line ", line_no, ": expected key = value"));
    }
    cfg.set(strip(body.substr(0, eq)), strip(body.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

std::string TrainConfig::to_kv() const {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "epochs = " << epochs << "\n";
  os << "learning_rate = " << learning_rate << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "cnn_blocks = " << cnn_blocks << "\n";
  os << "kernel_size = " << kernel_size << "\n";
  os << "cnn_channels = " << cnn_channels << "\n";
  os << "heads = " << heads << "\n";
  os << "hidden_size = " << hidden_size << "\n";
  os << "warmup_factor = " << warmup_factor << "\n";
  os << "length_embed_dim = " << length_embed_dim << "\n";
  os << "max_offset = " << max_offset << "\n";
  os << "encoder_dim = " << encoder_dim << "\n";
  os << "mixer_layers = " << mixer_layers << "\n";
  os << "seed = " << seed << "\n";
  os << "precision = " << precision << "\n";
  os << "threshold = " << threshold << "\n";
  os << "weight_decay = " << weight_decay << "\n";
  os << "beta1 = " << beta1 << "\n";
  os << "beta2 = " << beta2 << "\n";
  os << "adam_eps = " << adam_eps << "\n";
  os << "grad_clip = " << grad_clip << "\n";
  os << "dropout = " << dropout << "\n";
  os << "max_train_len = " << max_train_len << "\n";
  os << "leaky_slope = " << leaky_slope << "\n";
  os << "ln_eps = " << ln_eps << "\n";
  return os.str();
}

// -------------------------------------------------------------- schedule

double lr_schedule(int64_t step, int64_t total_steps, double peak_lr, double warmup_factor) {
  if (total_steps <= 0) throw ConfigError("lr_schedule: total_steps must be positive");
  if (step < 0 || step > total_steps) {
    throw ConfigError(str("lr_schedule: step ", step, " outside [0, ", total_steps, "]"));
  }
  const double warm = warmup_factor * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warm) return peak_lr * s / warm;
  const double span = static_cast<double>(total_steps) - warm;
  if (span <= 0) return peak_lr;
  return peak_lr * (static_cast<double>(total_steps) - s) / span;
}

// --------------------------------------------------------------- optimizer

template <class Real>
void OptimizerState<Real>::reset(const Params<Real>& params) {
  m.clear();
  v.clear();
  step = 0;
  params.for_each([&](const std::string&, const Tensor<Real>& t) {
    m.emplace_back(static_cast<size_t>(t.numel()), Real(0));
    v.emplace_back(static_cast<size_t>(t.numel()), Real(0));
  });
}

template <class Real>
void adamw_step(const Params<Real>& params, OptimizerState<Real>& state, double lr,
                const TrainConfig& cfg) {
  if (state.empty()) state.reset(params);

  if (cfg.grad_clip > 0) {
    double sq = 0;
    params.for_each([&](const std::string&, const Tensor<Real>& t) {
      if (!t.has_grad()) return;
      for (Real g : t.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    });
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
      const Real scale = static_cast<Real>(cfg.grad_clip / norm);
      params.for_each([&](const std::string&, const Tensor<Real>& t) {
        if (!t.has_grad()) return;
        for (Real& g : t.grad()) g *= scale;
      });
    }
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const Real b1 = static_cast<Real>(cfg.beta1);
  const Real b2 = static_cast<Real>(cfg.beta2);
  const Real eps = static_cast<Real>(cfg.adam_eps);
  const Real wd = static_cast<Real>(lr * cfg.weight_decay);
  const Real inv_bc1 = static_cast<Real>(1.0 / bc1);
  const Real inv_bc2 = static_cast<Real>(1.0 / bc2);
  const Real step_lr = static_cast<Real>(lr);

  size_t idx = 0;
  params.for_each([&](const std::string& name, const Tensor<Real>& t) {
    auto& mom = state.m[idx];
    auto& var = state.v[idx];
    ++idx;
    if (static_cast<int64_t>(mom.size()) != t.numel()) {
      throw ContractError(str("adamw: state size mismatch for ", name));
    }
    Real* p = t.data();
    const bool has_grad = t.has_grad();
    const Real* grad = has_grad ? t.grad().data() : nullptr;
    for (int64_t i = 0; i < t.numel(); ++i) {
      const Real g = has_grad ? grad[i] : Real(0);
      mom[static_cast<size_t>(i)] = b1 * mom[static_cast<size_t>(i)] + (Real(1) - b1) * g;
      var[static_cast<size_t>(i)] = b2 * var[static_cast<size_t>(i)] + (Real(1) - b2) * g * g;
      const Real mhat = mom[static_cast<size_t>(i)] * inv_bc1;
      const Real vhat = var[static_cast<size_t>(i)] * inv_bc2;
      p[i] -= step_lr * (mhat / (std::sqrt(vhat) + eps)) + wd * p[i];
    }
    t.zero_grad();
  });
}

// ----------------------------------------------------------------- batches

namespace {

template <class Real>
Tensor<Real> batch_targets(const std::vector<Sentence>& sentences,
                           const std::vector<int64_t>& indices,
                           const std::map<std::string, int64_t>& type_ids, int64_t num_types,
                           int64_t n) {
  const int64_t batch = static_cast<int64_t>(indices.size());
  Tensor<Real> y = Tensor<Real>::zeros({batch, n, n, num_types});
  for (int64_t b = 0; b < batch; ++b) {
    const Sentence& s = sentences[static_cast<size_t>(indices[static_cast<size_t>(b)])];
    const int64_t len = static_cast<int64_t>(s.tokens.size());
    const auto grid = build_targets(s, type_ids, num_types);
    for (int64_t i = 0; i < len; ++i)
      for (int64_t j = 0; j < len; ++j)
        for (int64_t t = 0; t < num_types; ++t)
          y.data()[(((b * n) + i) * n + j) * num_types + t] =
              static_cast<Real>(grid[static_cast<size_t>((i * len + j) * num_types + t)]);
  }
  return y;
}

std::vector<std::vector<Entity>> gold_sets(const std::vector<Sentence>& sentences) {
  std::vector<std::vector<Entity>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.entities);
  return out;
}

std::vector<Entity> to_entities(const std::vector<DecodedEntity>& decoded,
                                const std::vector<std::string>& type_names) {
  std::vector<Entity> out;
  for (const auto& d : decoded) {
    for (const auto& ts : d.types) {
      out.push_back({d.start, d.end, type_names[static_cast<size_t>(ts.type)]});
    }
  }
  return out;
}

}  // namespace

// ----------------------------------------------------------------- Trainer

template <class Real>
Trainer<Real>::Trainer(TrainConfig cfg, Corpus corpus)
    : cfg_(std::move(cfg)), corpus_(std::move(corpus)), dropout_rng_(cfg_.seed ^ 0x5e1ec7ed) {
  init_common();
  params_ = init_params<Real>(model_cfg_, cfg_.seed);
  opt_.reset(params_);
}

template <class Real>
Trainer<Real>::Trainer(TrainConfig cfg, Corpus corpus, const Checkpoint<Real>& resume)
    : cfg_(std::move(cfg)), corpus_(std::move(corpus)), dropout_rng_(cfg_.seed ^ 0x5e1ec7ed) {
  // the checkpoint's vocabulary and types override corpus-derived ones; ids
  // must match the embedding rows
  vocab_.tokens = resume.meta.vocab;
  for (size_t i = 0; i < vocab_.tokens.size(); ++i) {
    vocab_.index[vocab_.tokens[i]] = static_cast<int64_t>(i) + 1;
  }
  types_ = resume.meta.type_names;
  type_ids_ = type_index(types_);
  model_cfg_ = cfg_.model_config(static_cast<int64_t>(vocab_.tokens.size()),
                                 static_cast<int64_t>(types_.size()));
  if (!(model_cfg_ == resume.meta.config)) {
    throw VersionError("resume: checkpoint model configuration does not match the train config");
  }
  cfg_.validate();
  if (corpus_.train.empty()) throw ValidationError("train: empty train split");
  params_ = resume.params;
  opt_.reset(params_);
  opt_.step = resume.meta.step;
  size_t idx = 0;
  params_.for_each([&](const std::string& name, const Tensor<Real>&) {
    auto mit = resume.extras.find("opt.m." + name);
    auto vit = resume.extras.find("opt.v." + name);
    if (mit != resume.extras.end()) opt_.m[idx] = mit->second.values();
    if (vit != resume.extras.end()) opt_.v[idx] = vit->second.values();
    ++idx;
  });
  epoch_ = resume.meta.epoch;
  best_dev_f1_ = resume.meta.best_dev_f1;
}

template <class Real>
void Trainer<Real>::init_common() {
  cfg_.validate();
  if (corpus_.train.empty()) throw ValidationError("train: empty train split");
  for (const auto* split : {&corpus_.train, &corpus_.dev}) {
    for (size_t i = 0; i < split->size(); ++i) {
      const auto& s = (*split)[i];
      if (static_cast<int64_t>(s.tokens.size()) > cfg_.max_train_len) {
        throw ValidationError(str("train: sentence ", i, " has ", s.tokens.size(),
                                  " tokens, over the cap of ", cfg_.max_train_len,
                                  " (raise max_train_len or re-split the corpus)"));
      }
    }
  }
  if (corpus_.types.empty()) throw ValidationError("train: corpus has no entity types");
  std::vector<std::vector<std::string>> token_lists;
  token_lists.reserve(corpus_.train.size());
  for (const auto& s : corpus_.train) token_lists.push_back(s.tokens);
  vocab_ = Vocab::build(token_lists);
  types_ = corpus_.types;
  type_ids_ = type_index(types_);
  model_cfg_ = cfg_.model_config(static_cast<int64_t>(vocab_.tokens.size()),
                                 static_cast<int64_t>(types_.size()));
  model_cfg_.validate();
}

template <class Real>
std::vector<int64_t> Trainer<Real>::epoch_order(int64_t epoch) const {
  std::vector<int64_t> order(corpus_.train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  Rng rng(cfg_.seed + 1000003ull * static_cast<uint64_t>(epoch + 1));
  rng.shuffle(order);
  return order;
}

template <class Real>
double Trainer<Real>::train_batch(const std::vector<int64_t>& indices) {
  std::vector<std::vector<int64_t>> ids;
  int64_t n = 0;
  ids.reserve(indices.size());
  for (int64_t idx : indices) {
    const Sentence& s = corpus_.train[static_cast<size_t>(idx)];
    ids.push_back(vocab_.encode_all(s.tokens));
    n = std::max(n, static_cast<int64_t>(s.tokens.size()));
  }
  auto targets = batch_targets<Real>(corpus_.train, indices, type_ids_,
                                     static_cast<int64_t>(types_.size()), n);

  Graph<Real> g;
  ForwardOptions opt;
  opt.dropout = cfg_.dropout;
  opt.rng = &dropout_rng_;
  auto f = forward_ids(&g, params_, model_cfg_, ids, opt);
  auto loss = training_loss(&g, f, targets);
  const double value = static_cast<double>(loss.item());
  g.backward(loss);

  const int64_t batches_per_epoch =
      (static_cast<int64_t>(corpus_.train.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
  const int64_t total = cfg_.epochs * batches_per_epoch;
  const double lr = lr_schedule(std::min(opt_.step + 1, total), total, cfg_.learning_rate,
                                cfg_.warmup_factor);
  adamw_step(params_, opt_, lr, cfg_);
  return value;
}

template <class Real>
double Trainer<Real>::evaluate_dev() {
  if (corpus_.dev.empty()) return 0.0;
  auto report = evaluate_model(params_, model_cfg_, vocab_, types_, corpus_.dev, cfg_.threshold);
  return report.micro.f1;
}

template <class Real>
CheckpointMeta Trainer<Real>::meta() const {
  CheckpointMeta m;
  m.config = model_cfg_;
  m.vocab = vocab_.tokens;
  m.type_names = types_;
  m.dtype = sizeof(Real) == 4 ? "f32" : "f64";
  m.epoch = epoch_;
  m.step = opt_.step;
  m.best_dev_f1 = best_dev_f1_;
  return m;
}

template <class Real>
std::map<std::string, Tensor<Real>> Trainer<Real>::optimizer_extras() const {
  std::map<std::string, Tensor<Real>> extras;
  size_t idx = 0;
  params_.for_each([&](const std::string& name, const Tensor<Real>& t) {
    extras.emplace("opt.m." + name, Tensor<Real>::from(t.shape(), opt_.m[idx]));
    extras.emplace("opt.v." + name, Tensor<Real>::from(t.shape(), opt_.v[idx]));
    ++idx;
  });
  return extras;
}

template <class Real>
std::vector<EpochLog> Trainer<Real>::run(const std::string& best_path,
                                         const std::string& last_path, std::ostream* log,
                                         int64_t epoch_limit) {
  std::vector<EpochLog> logs;
  const int64_t stop =
      epoch_limit >= 0 ? std::min(cfg_.epochs, epoch_ + epoch_limit) : cfg_.epochs;
  for (; epoch_ < stop; ++epoch_) {
    const auto order = epoch_order(epoch_);
    double loss_sum = 0.0;
    int64_t batches = 0;
    double last_lr = 0.0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg_.batch_size)) {
      const size_t hi = std::min(order.size(), at + static_cast<size_t>(cfg_.batch_size));
      std::vector<int64_t> batch(order.begin() + static_cast<int64_t>(at),
                                 order.begin() + static_cast<int64_t>(hi));
      loss_sum += train_batch(batch);
      ++batches;
      const int64_t batches_per_epoch =
          (static_cast<int64_t>(corpus_.train.size()) + cfg_.batch_size - 1) / cfg_.batch_size;
      last_lr = lr_schedule(std::min(opt_.step, cfg_.epochs * batches_per_epoch),
                            cfg_.epochs * batches_per_epoch, cfg_.learning_rate,
                            cfg_.warmup_factor);
    }

    EpochLog entry;
    entry.epoch = epoch_ + 1;
    entry.lr = last_lr;
    entry.train_loss = batches > 0 ? loss_sum / static_cast<double>(batches) : 0.0;
    entry.dev_f1 = evaluate_dev();
    entry.line = json{{"epoch", entry.epoch},
                      {"lr", entry.lr},
                      {"train_loss", entry.train_loss},
                      {"dev_f1", entry.dev_f1}}
                     .dump();
    if (log) (*log) << entry.line << "\n";
    logs.push_back(entry);

    const bool improved = entry.dev_f1 > best_dev_f1_;
    if (improved) best_dev_f1_ = entry.dev_f1;
    if (!best_path.empty() && (improved || best_dev_f1_ < 0)) {
      CheckpointMeta m = meta();
      m.epoch = epoch_ + 1;
      save_checkpoint(best_path, m, params_);
    }
    if (!last_path.empty()) {
      CheckpointMeta m = meta();
      m.epoch = epoch_ + 1;
      save_checkpoint(last_path, m, params_, optimizer_extras());
    }
  }
  return logs;
}

// ------------------------------------------------------------- evaluation

template <class Real>
std::vector<std::vector<DecodedEntity>> predict_model(const Params<Real>& params,
                                                      const ModelConfig& cfg, const Vocab& vocab,
                                                      const std::vector<Sentence>& sentences,
                                                      double threshold, int64_t batch_size,
                                                      bool multi_label) {
  std::vector<std::vector<DecodedEntity>> out(sentences.size());
  for (size_t at = 0; at < sentences.size(); at += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(sentences.size(), at + static_cast<size_t>(batch_size));
    std::vector<std::vector<int64_t>> ids;
    for (size_t i = at; i < hi; ++i) ids.push_back(vocab.encode_all(sentences[i].tokens));
    auto f = forward_ids<Real>(nullptr, params, cfg, ids, {.want_probs = true});
    for (size_t i = at; i < hi; ++i) {
      const int64_t len = static_cast<int64_t>(sentences[i].tokens.size());
      if (len == 0) continue;  // empty sentence: empty prediction
      auto grid = probs_to_grid(f.probs, static_cast<int64_t>(i - at), len);
      out[i] = decode(grid, threshold, multi_label);
    }
  }
  return out;
}

template <class Real>
MetricsReport evaluate_model(const Params<Real>& params, const ModelConfig& cfg,
                             const Vocab& vocab, const std::vector<std::string>& type_names,
                             const std::vector<Sentence>& sentences, double threshold,
                             int64_t batch_size, bool multi_label,
                             FlatnessConvention convention) {
  auto decoded = predict_model(params, cfg, vocab, sentences, threshold, batch_size, multi_label);
  std::vector<std::vector<Entity>> pred;
  pred.reserve(decoded.size());
  for (const auto& d : decoded) pred.push_back(to_entities(d, type_names));
  return compute_metrics(pred, gold_sets(sentences), convention);
}

template <class Real>
std::vector<double> per_sentence_losses(const Params<Real>& params, const ModelConfig& cfg,
                                        const Vocab& vocab,
                                        const std::vector<std::string>& type_names,
                                        const std::vector<Sentence>& sentences,
                                        int64_t batch_size) {
  const auto type_ids = type_index(type_names);
  const int64_t num_types = static_cast<int64_t>(type_names.size());
  std::vector<double> out(sentences.size(), 0.0);
  for (size_t at = 0; at < sentences.size(); at += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(sentences.size(), at + static_cast<size_t>(batch_size));
    std::vector<std::vector<int64_t>> ids;
    std::vector<int64_t> indices;
    int64_t n = 0;
    for (size_t i = at; i < hi; ++i) {
      ids.push_back(vocab.encode_all(sentences[i].tokens));
      indices.push_back(static_cast<int64_t>(i));
      n = std::max(n, static_cast<int64_t>(sentences[i].tokens.size()));
    }
    auto targets = batch_targets<Real>(sentences, indices, type_ids, num_types, n);
    auto f = forward_ids<Real>(nullptr, params, cfg, ids, {});
    const Real* z = f.logits.data();
    const Real* y = targets.data();
    for (size_t i = at; i < hi; ++i) {
      const int64_t b = static_cast<int64_t>(i - at);
      const int64_t len = static_cast<int64_t>(sentences[i].tokens.size());
      if (len == 0) continue;
      double sum = 0.0;
      for (int64_t r = 0; r < len; ++r) {
        for (int64_t c = 0; c < len; ++c) {
          for (int64_t t = 0; t < num_types; ++t) {
            const int64_t idx = (((b * n) + r) * n + c) * num_types + t;
            const double zv = static_cast<double>(z[idx]);
            const double soft = zv > 0 ? zv + std::log1p(std::exp(-zv)) : std::log1p(std::exp(zv));
            sum += soft - zv * static_cast<double>(y[idx]);
          }
        }
      }
      out[i] = sum / static_cast<double>(len * len * num_types);
    }
  }
  return out;
}

void save_predictions(const std::string& path, const std::vector<Sentence>& sentences,
                      const std::vector<std::vector<DecodedEntity>>& predictions,
                      const std::vector<std::string>& type_names) {
  if (sentences.size() != predictions.size()) {
    throw ContractError("save_predictions: sentence/prediction count mismatch");
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(str("cannot open for writing: ", path));
  for (size_t i = 0; i < sentences.size(); ++i) {
    json ents = json::array();
    for (const auto& d : predictions[i]) {
      for (const auto& ts : d.types) {
        ents.push_back({{"start", d.start},
                        {"end", d.end},
                        {"type", type_names[static_cast<size_t>(ts.type)]},
                        {"score", ts.score}});
      }
    }
    out << json{{"tokens", sentences[i].tokens},
                {"entities", std::move(ents)},
                {"doc_id", sentences[i].doc_id}}
               .dump()
        << "\n";
  }
  if (!out) throw IoError(str("write failed: ", path));
}

// ---------------------------------------------------------- instantiation

#define NNER_INSTANTIATE_TRAIN(Real)                                                            \
  template struct OptimizerState<Real>;                                                         \
  template void adamw_step<Real>(const Params<Real>&, OptimizerState<Real>&, double,            \
                                 const TrainConfig&);                                           \
  template class Trainer<Real>;                                                                 \
  template MetricsReport evaluate_model<Real>(const Params<Real>&, const ModelConfig&,          \
                                              const Vocab&, const std::vector<std::string>&,    \
                                              const std::vector<Sentence>&, double, int64_t,    \
                                              bool, FlatnessConvention);                        \
  template std::vector<std::vector<DecodedEntity>> predict_model<Real>(                         \
      const Params<Real>&, const ModelConfig&, const Vocab&, const std::vector<Sentence>&,      \
      double, int64_t, bool);                                                                   \
  template std::vector<double> per_sentence_losses<Real>(                                       \
      const Params<Real>&, const ModelConfig&, const Vocab&, const std::vector<std::string>&,   \
      const std::vector<Sentence>&, int64_t);

NNER_INSTANTIATE_TRAIN(float)
NNER_INSTANTIATE_TRAIN(double)

#undef NNER_INSTANTIATE_TRAIN

}  // namespace nner
