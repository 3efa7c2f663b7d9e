// Command-line surface: corpus preprocessing, synthetic data, training,
// evaluation, prediction, and a full-model gradient check.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "nner/corpus.hpp"
#include "nner/decoder.hpp"
#include "nner/metrics.hpp"
#include "nner/model.hpp"
#include "nner/train.hpp"

namespace fs = std::filesystem;
using namespace nner;

namespace {

struct GlobalArgs {
  std::string config;
  std::string data;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  double threshold = 0.0;
  bool threshold_set = false;
  std::string precision;
};

TrainConfig resolve_config(const GlobalArgs& g) {
  TrainConfig cfg;
  if (!g.config.empty()) cfg = TrainConfig::from_file(g.config);
  if (g.seed_set) cfg.seed = g.seed;
  if (g.threshold_set) cfg.threshold = g.threshold;
  if (!g.precision.empty()) cfg.precision = g.precision;
  cfg.validate();
  return cfg;
}

Corpus load_corpus_dir(const std::string& dir) {
  auto maybe = [&](const std::string& name) -> std::vector<Sentence> {
    const fs::path p = fs::path(dir) / name;
    if (!fs::exists(p)) return {};
    return load_sentences(p.string());
  };
  auto train = load_sentences((fs::path(dir) / "train.jsonl").string());
  return make_corpus(std::move(train), maybe("dev.jsonl"), maybe("test.jsonl"));
}

Vocab vocab_from_meta(const CheckpointMeta& meta) {
  Vocab vocab;
  vocab.tokens = meta.vocab;
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    vocab.index[vocab.tokens[i]] = static_cast<int64_t>(i) + 1;
  }
  return vocab;
}

// sentence boundaries after terminal punctuation tokens
std::vector<int64_t> punctuation_boundaries(const std::vector<std::string>& tokens) {
  std::vector<int64_t> out;
  for (size_t i = 0; i + 1 < tokens.size(); ++i) {
    const std::string& t = tokens[i];
    if (t == "." || t == "!" || t == "?" || t == ";") {
      out.push_back(static_cast<int64_t>(i) + 1);
    }
  }
  return out;
}

int cmd_gen(const GlobalArgs& g, SynthOptions opt, int64_t n_train, int64_t n_dev,
            int64_t n_test) {
  if (g.seed_set) opt.seed = g.seed;
  if (g.out.empty()) throw ConfigError("gen: --out directory is required");
  opt.n_sentences = n_train + n_dev + n_test;
  auto sentences = synth_generate(opt);
  fs::create_directories(g.out);
  auto slice = [&](int64_t a, int64_t b) {
    return std::vector<Sentence>(sentences.begin() + a, sentences.begin() + b);
  };
  Corpus c = make_corpus(slice(0, n_train), slice(n_train, n_train + n_dev),
                         slice(n_train + n_dev, opt.n_sentences));
  save_sentences((fs::path(g.out) / "train.jsonl").string(), c.train);
  save_sentences((fs::path(g.out) / "dev.jsonl").string(), c.dev);
  save_sentences((fs::path(g.out) / "test.jsonl").string(), c.test);
  std::cout << stats_report_json(c) << "\n";
  return 0;
}

int cmd_preprocess(const GlobalArgs& g, const std::string& in_path, const std::string& ratios,
                   bool fix) {
  if (g.out.empty()) throw ConfigError("preprocess: --out directory is required");
  auto documents = load_sentences(in_path);

  std::vector<Sentence> split;
  for (const auto& doc : documents) {
    auto pieces = split_sentences_entity_safe(doc, punctuation_boundaries(doc.tokens));
    split.insert(split.end(), pieces.begin(), pieces.end());
  }

  const AuditReport report = audit(split);
  if (!report.clean()) {
    std::cerr << audit_report_json(report) << "\n";
    if (!fix) {
      throw ValidationError(
          "preprocess: corpus has conflicts or duplicates (rerun with --fix to repair)");
    }
    split = audit_fix(split);
  }

  double r_train = 8, r_dev = 1, r_test = 1;
  if (std::sscanf(ratios.c_str(), "%lf:%lf:%lf", &r_train, &r_dev, &r_test) != 3) {
    throw ConfigError(str("preprocess: cannot parse ratios '", ratios, "'"));
  }
  Corpus c = document_split(split, r_train, r_dev, r_test, g.seed_set ? g.seed : 1);
  fs::create_directories(g.out);
  save_sentences((fs::path(g.out) / "train.jsonl").string(), c.train);
  save_sentences((fs::path(g.out) / "dev.jsonl").string(), c.dev);
  save_sentences((fs::path(g.out) / "test.jsonl").string(), c.test);
  std::cout << stats_report_json(c) << "\n";
  return 0;
}

int cmd_audit(const GlobalArgs& g, const std::string& path, bool fix) {
  auto sentences = load_sentences(path);
  const AuditReport report = audit(sentences);
  std::cout << audit_report_json(report) << "\n";
  if (fix) {
    if (g.out.empty()) throw ConfigError("audit: --fix needs --out for the repaired corpus");
    save_sentences(g.out, audit_fix(sentences));
  }
  return 0;
}

int cmd_stats(const std::string& train, const std::string& dev, const std::string& test) {
  Corpus c = make_corpus(train.empty() ? std::vector<Sentence>{} : load_sentences(train),
                         dev.empty() ? std::vector<Sentence>{} : load_sentences(dev),
                         test.empty() ? std::vector<Sentence>{} : load_sentences(test));
  std::cout << stats_report_json(c) << "\n";
  return 0;
}

template <class Real>
int run_train(const TrainConfig& cfg, const GlobalArgs& g, const std::string& resume_path) {
  Corpus corpus = load_corpus_dir(g.data);
  fs::create_directories(g.out);
  const std::string best = (fs::path(g.out) / "best.ckpt").string();
  const std::string last = (fs::path(g.out) / "last.ckpt").string();
  std::ofstream log_file(fs::path(g.out) / "train_log.jsonl", std::ios::app);

  auto run_all = [&](Trainer<Real>& trainer) {
    for (const auto& entry : trainer.run(best, last, &log_file)) {
      std::cout << entry.line << "\n";
    }
  };
  if (resume_path.empty()) {
    Trainer<Real> trainer(cfg, std::move(corpus));
    run_all(trainer);
  } else {
    auto ck = load_checkpoint<Real>(resume_path);
    Trainer<Real> trainer(cfg, std::move(corpus), ck);
    run_all(trainer);
  }
  std::cout << "saved " << best << " and " << last << "\n";
  return 0;
}

template <class Real>
int run_eval(const GlobalArgs& g, const std::string& ckpt_path, const std::string& data_path,
             bool argmax, bool against_gold) {
  auto ck = load_checkpoint<Real>(ckpt_path);
  const Vocab vocab = vocab_from_meta(ck.meta);
  auto sentences = load_sentences(data_path);
  const double threshold = g.threshold_set ? g.threshold : 0.5;
  auto report = evaluate_model(ck.params, ck.meta.config, vocab, ck.meta.type_names, sentences,
                               threshold, 32, !argmax,
                               against_gold ? FlatnessConvention::AgainstGold
                                            : FlatnessConvention::WithinOwnSet);
  const std::string body = metrics_report_json(report);
  if (!g.out.empty()) {
    std::ofstream out(g.out, std::ios::trunc);
    out << body << "\n";
  }
  std::cout << body << "\n";
  return 0;
}

template <class Real>
int run_predict(const GlobalArgs& g, const std::string& ckpt_path, const std::string& in_path,
                bool argmax) {
  if (g.out.empty()) throw ConfigError("predict: --out file is required");
  auto ck = load_checkpoint<Real>(ckpt_path);
  const Vocab vocab = vocab_from_meta(ck.meta);
  auto sentences = load_sentences(in_path);
  const double threshold = g.threshold_set ? g.threshold : 0.5;
  auto preds = predict_model(ck.params, ck.meta.config, vocab, sentences, threshold, 32, !argmax);
  save_predictions(g.out, sentences, preds, ck.meta.type_names);
  std::cout << "wrote " << g.out << "\n";
  return 0;
}

// Full-model check of analytic gradients against central differences, on a
// probe with parameters in generic position. Seeds are scanned until all
// LeakyReLU pre-activations clear the step size, so the difference oracle
// never straddles a kink.
int cmd_gradcheck(const GlobalArgs& g, double step) {
  TrainConfig tc = resolve_config(g);
  ModelConfig cfg = tc.model_config(6, 3);
  if (g.config.empty()) {
    cfg.encoder_dim = 16;
    cfg.hidden = 16;
    cfg.feat = 8;
    cfg.heads = 2;
    cfg.len_embed_dim = 8;
    cfg.max_offset = 8;
    cfg.cnn_blocks = 1;
  }
  const int64_t n = 6, t = cfg.types;

  Params<double> params;
  std::vector<int64_t> sentence;
  double margin = 0.0;
  for (uint64_t seed = 1; seed <= 2000 && margin < 4.0 * step; ++seed) {
    params = make_params<double>(cfg);
    Rng rng(seed);
    params.for_each([&](const std::string& name, const Tensor<double>& tt) {
      for (auto& v : tt.values()) v = rng.uniform(-0.3, 0.3);
      if (name.find("gamma") != std::string::npos)
        for (auto& v : tt.values()) v = 1.0 + rng.uniform(-0.2, 0.2);
    });
    sentence.assign(static_cast<size_t>(n), 0);
    for (auto& id : sentence) id = 1 + rng.below(cfg.vocab);
    margin = 1e9;
    Graph<double> gr;
    auto rep = encode_tokens_toy(&gr, params, cfg, sentence);
    auto padded = pad_stack(&gr, {rep}, n);
    for (auto* w : {&params.w_start, &params.w_end}) {
      auto pre = matmul(&gr, padded, *w);
      for (double v : pre.values()) margin = std::min(margin, std::abs(v));
    }
  }
  if (margin < 4.0 * step) throw Error("gradcheck: no probe with a safe kink margin found");

  auto y = Tensor<double>::zeros({1, n, n, t});
  Rng yr(12345);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = i; j < n; ++j)
      if (yr.below(4) == 0) {
        const int64_t c = yr.below(t);
        y.values()[static_cast<size_t>((i * n + j) * t + c)] = 1.0;
        y.values()[static_cast<size_t>((j * n + i) * t + c)] = 1.0;
      }

  std::vector<std::vector<int64_t>> batch{sentence};
  auto loss_value = [&]() {
    Graph<double> gr;
    auto f = forward_ids(&gr, params, cfg, batch, {});
    return training_loss(&gr, f, y).item();
  };
  {
    Graph<double> gr;
    auto f = forward_ids(&gr, params, cfg, batch, {});
    auto l = training_loss(&gr, f, y);
    gr.backward(l);
  }

  double worst = 0.0;
  std::cout << std::left;
  params.for_each([&](const std::string& name, const Tensor<double>& tt) {
    double local = 0.0;
    for (int64_t i = 0; i < tt.numel(); ++i) {
      double* slot = tt.data() + i;
      const double orig = *slot;
      *slot = orig + step;
      const double hi = loss_value();
      *slot = orig - step;
      const double lo = loss_value();
      *slot = orig;
      const double fd = (hi - lo) / (2.0 * step);
      const double a = tt.grad()[static_cast<size_t>(i)];
      local = std::max(local, std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)}));
    }
    std::cout << std::setw(24) << name << " max rel err " << std::scientific
              << std::setprecision(3) << local << "\n"
              << std::defaultfloat;
    worst = std::max(worst, local);
  });
  std::cout << "overall max rel err " << std::scientific << std::setprecision(3) << worst
            << (worst < 1e-4 ? "  (PASS)" : "  (FAIL)") << "\n";
  return worst < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"span-grid nested NER: biaffine scoring with a CNN refiner"};
  app.require_subcommand(1);

  GlobalArgs g;
  app.add_option("--config", g.config, "train config file (key = value lines)");
  app.add_option("--data", g.data, "corpus directory or file");
  app.add_option("--out", g.out, "output directory or file");
  auto* seed_opt = app.add_option("--seed", g.seed, "random seed");
  auto* thr_opt = app.add_option("--threshold", g.threshold, "decode threshold");
  app.add_option("--precision", g.precision, "f32 or f64");
  app.fallthrough();

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  SynthOptions sopt;
  int64_t n_train = 2000, n_dev = 200, n_test = 200;
  gen->add_option("--train", n_train, "train sentences");
  gen->add_option("--dev", n_dev, "dev sentences");
  gen->add_option("--test", n_test, "test sentences");
  gen->add_option("--vocab", sopt.vocab_size, "vocabulary size");
  gen->add_option("--min-len", sopt.min_len, "minimum sentence length");
  gen->add_option("--max-len", sopt.max_len, "maximum sentence length");
  gen->add_option("--nesting", sopt.nesting_rate, "target overlapping-mention fraction");
  gen->add_option("--types", sopt.num_types, "entity type count");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "split documents into sentences and partition");
  std::string pre_in, pre_ratios = "8:1:1";
  bool pre_fix = false;
  pre->add_option("--in", pre_in, "document-level jsonl")->required();
  pre->add_option("--ratios", pre_ratios, "train:dev:test document ratios");
  pre->add_flag("--fix", pre_fix, "repair conflicts/duplicates instead of failing");

  // audit
  auto* aud = app.add_subcommand("audit", "report annotation conflicts and duplicates");
  bool aud_fix = false;
  aud->add_flag("--fix", aud_fix, "write a repaired corpus to --out");

  // stats
  auto* sta = app.add_subcommand("stats", "corpus statistics report");
  std::string sta_train, sta_dev, sta_test;
  sta->add_option("--train", sta_train, "train split file");
  sta->add_option("--dev", sta_dev, "dev split file");
  sta->add_option("--test", sta_test, "test split file");

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_resume;
  tr->add_option("--resume", tr_resume, "checkpoint to resume from");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_ckpt;
  bool ev_argmax = false, ev_against_gold = false;
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_flag("--argmax", ev_argmax, "single best type per span");
  ev->add_flag("--against-gold", ev_against_gold,
               "judge prediction flatness against the gold structure");

  // predict
  auto* pr = app.add_subcommand("predict", "decode entities for raw sentences");
  std::string pr_ckpt, pr_in;
  bool pr_argmax = false;
  pr->add_option("--ckpt", pr_ckpt, "checkpoint path")->required();
  pr->add_option("--in", pr_in, "input jsonl (entities ignored)")->required();
  pr->add_flag("--argmax", pr_argmax, "single best type per span");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "verify gradients against finite differences");
  double gc_step = 1e-3;
  gc->add_option("--step", gc_step, "central-difference step");

  CLI11_PARSE(app, argc, argv);
  g.seed_set = seed_opt->count() > 0;
  g.threshold_set = thr_opt->count() > 0;

  try {
    if (gen->parsed()) return cmd_gen(g, sopt, n_train, n_dev, n_test);
    if (pre->parsed()) return cmd_preprocess(g, pre_in, pre_ratios, pre_fix);
    if (aud->parsed()) return cmd_audit(g, g.data, aud_fix);
    if (sta->parsed()) {
      return cmd_stats(sta_train.empty() ? g.data : sta_train, sta_dev, sta_test);
    }
    if (tr->parsed()) {
      TrainConfig cfg = resolve_config(g);
      if (g.data.empty()) throw ConfigError("train: --data directory is required");
      if (g.out.empty()) throw ConfigError("train: --out directory is required");
      return cfg.precision == "f64" ? run_train<double>(cfg, g, tr_resume)
                                    : run_train<float>(cfg, g, tr_resume);
    }
    if (ev->parsed()) {
      const std::string dtype = checkpoint_dtype(ev_ckpt);
      return dtype == "f64" ? run_eval<double>(g, ev_ckpt, g.data, ev_argmax, ev_against_gold)
                            : run_eval<float>(g, ev_ckpt, g.data, ev_argmax, ev_against_gold);
    }
    if (pr->parsed()) {
      const std::string dtype = checkpoint_dtype(pr_ckpt);
      return dtype == "f64" ? run_predict<double>(g, pr_ckpt, pr_in, pr_argmax)
                            : run_predict<float>(g, pr_ckpt, pr_in, pr_argmax);
    }
    if (gc->parsed()) return cmd_gradcheck(g, gc_step);
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
