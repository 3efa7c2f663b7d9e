#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "nner/corpus.hpp"
#include "nner/decoder.hpp"
#include "nner/metrics.hpp"
#include "nner/model.hpp"

namespace nner {

// Flat key=value training configuration; keys mirror the field names.
struct TrainConfig {
  int64_t epochs = 30;
  double learning_rate = 2e-3;
  int64_t batch_size = 16;
  int64_t cnn_blocks = 2;
  int64_t kernel_size = 3;
  int64_t cnn_channels = 32;  // r, also the biaffine feature size
  int64_t heads = 2;
  int64_t hidden_size = 64;
  double warmup_factor = 0.1;
  int64_t length_embed_dim = 16;
  int64_t max_offset = 64;
  int64_t encoder_dim = 64;
  int64_t mixer_layers = 2;
  uint64_t seed = 1;
  std::string precision = "f32";  // f32 | f64
  double threshold = 0.5;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // 0 disables global-norm clipping
  double dropout = 0.0;    // 0 disables dropout
  int64_t max_train_len = 128;
  double leaky_slope = 0.01;
  double ln_eps = 1e-5;

  void validate() const;
  ModelConfig model_config(int64_t vocab, int64_t num_types) const;

  // `key = value` lines; blank lines and #-comments ignored.
  static TrainConfig from_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  std::string to_kv() const;
};

// Linear warmup from 0 to peak over warmup_factor*total_steps, then linear
// decay to 0 at total_steps. Continuous and nonnegative.
double lr_schedule(int64_t step, int64_t total_steps, double peak_lr, double warmup_factor);

template <class Real>
struct OptimizerState {
  std::vector<std::vector<Real>> m, v;  // aligned with Params::for_each order
  int64_t step = 0;

  void reset(const Params<Real>& params);
  bool empty() const { return m.empty(); }
};

// Decoupled weight-decay update with bias correction; consumes and zeroes
// the parameter gradients.
template <class Real>
void adamw_step(const Params<Real>& params, OptimizerState<Real>& state, double lr,
                const TrainConfig& cfg);

struct EpochLog {
  int64_t epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double dev_f1 = 0.0;
  std::string line;  // serialized form, as written to the log stream
};

template <class Real>
class Trainer {
 public:
  // Fresh run: builds the vocabulary and type inventory from the corpus.
  Trainer(TrainConfig cfg, Corpus corpus);
  // Resume: restores parameters, optimizer state, and progress.
  Trainer(TrainConfig cfg, Corpus corpus, const Checkpoint<Real>& resume);

  // Trains the remaining epochs (at most epoch_limit of them when >= 0).
  // Writes one structured line per epoch to `log` (when given); saves the
  // best-dev checkpoint to best_path and a resumable checkpoint to
  // last_path (empty paths skip saving).
  std::vector<EpochLog> run(const std::string& best_path, const std::string& last_path,
                            std::ostream* log = nullptr, int64_t epoch_limit = -1);

  // Optimizer moments as named tensors ("opt.m.*", "opt.v.*") for resumable
  // checkpoints.
  std::map<std::string, Tensor<Real>> optimizer_extras() const;

  // One optimizer step on the given train-split sentences; returns the loss.
  double train_batch(const std::vector<int64_t>& indices);

  // Epoch-local deterministic order; pure function of (seed, epoch).
  std::vector<int64_t> epoch_order(int64_t epoch) const;

  double evaluate_dev();

  const Params<Real>& params() const { return params_; }
  OptimizerState<Real>& optimizer() { return opt_; }
  const ModelConfig& model_config() const { return model_cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const std::vector<std::string>& types() const { return types_; }
  CheckpointMeta meta() const;
  int64_t epoch() const { return epoch_; }

 private:
  void init_common();

  TrainConfig cfg_;
  Corpus corpus_;
  Vocab vocab_;
  std::vector<std::string> types_;
  std::map<std::string, int64_t> type_ids_;
  ModelConfig model_cfg_;
  Params<Real> params_;
  OptimizerState<Real> opt_;
  Rng dropout_rng_;
  int64_t epoch_ = 0;  // next epoch to run, 0-based
  double best_dev_f1_ = -1.0;
};

// Forward + decode + metrics over a frozen model.
template <class Real>
MetricsReport evaluate_model(const Params<Real>& params, const ModelConfig& cfg,
                             const Vocab& vocab, const std::vector<std::string>& type_names,
                             const std::vector<Sentence>& sentences, double threshold,
                             int64_t batch_size = 32, bool multi_label = true,
                             FlatnessConvention convention = FlatnessConvention::WithinOwnSet);

template <class Real>
std::vector<std::vector<DecodedEntity>> predict_model(const Params<Real>& params,
                                                      const ModelConfig& cfg, const Vocab& vocab,
                                                      const std::vector<Sentence>& sentences,
                                                      double threshold, int64_t batch_size = 32,
                                                      bool multi_label = true);

// Mean BCE restricted to each sentence's own valid cells, computed from a
// batched forward pass on frozen parameters.
template <class Real>
std::vector<double> per_sentence_losses(const Params<Real>& params, const ModelConfig& cfg,
                                        const Vocab& vocab,
                                        const std::vector<std::string>& type_names,
                                        const std::vector<Sentence>& sentences,
                                        int64_t batch_size);

void save_predictions(const std::string& path, const std::vector<Sentence>& sentences,
                      const std::vector<std::vector<DecodedEntity>>& predictions,
                      const std::vector<std::string>& type_names);

}  // namespace nner
