#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "nner/train.hpp"

using namespace nner;

namespace {

// small corpus + config that train in well under a second per epoch
TrainConfig small_config() {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 5e-3;
  cfg.batch_size = 4;
  cfg.cnn_blocks = 1;
  cfg.kernel_size = 3;
  cfg.cnn_channels = 8;
  cfg.heads = 2;
  cfg.hidden_size = 16;
  cfg.length_embed_dim = 8;
  cfg.max_offset = 16;
  cfg.encoder_dim = 16;
  cfg.seed = 5;
  return cfg;
}

Corpus small_corpus(int64_t n_train, uint64_t seed) {
  SynthOptions opt;
  opt.n_sentences = n_train + 6;
  opt.min_len = 5;
  opt.max_len = 10;
  opt.nesting_rate = 0.3;
  opt.seed = seed;
  auto sentences = synth_generate(opt);
  std::vector<Sentence> train(sentences.begin(), sentences.begin() + n_train);
  std::vector<Sentence> dev(sentences.begin() + n_train, sentences.end());
  return make_corpus(train, dev, {});
}

}  // namespace

TEST_CASE("lr schedule shape") {
  CHECK(lr_schedule(0, 100, 1.0, 0.1) == 0.0);
  CHECK(lr_schedule(10, 100, 1.0, 0.1) == doctest::Approx(1.0));   // ramp apex
  CHECK(lr_schedule(100, 100, 1.0, 0.1) == doctest::Approx(0.0));  // decay end
  CHECK(lr_schedule(5, 100, 2.0, 0.1) == doctest::Approx(1.0));
  CHECK(lr_schedule(55, 100, 1.0, 0.1) == doctest::Approx(0.5));

  // continuous, piecewise linear, nonnegative
  double prev = lr_schedule(0, 200, 1.0, 0.25);
  for (int64_t s = 1; s <= 200; ++s) {
    const double cur = lr_schedule(s, 200, 1.0, 0.25);
    CHECK(cur >= 0.0);
    CHECK(std::abs(cur - prev) < 0.03);
    prev = cur;
  }

  // zero warmup starts at the peak
  CHECK(lr_schedule(0, 10, 1.0, 0.0) == doctest::Approx(1.0));

  CHECK_THROWS_AS(lr_schedule(0, 0, 1.0, 0.1), ConfigError);
  CHECK_THROWS_AS(lr_schedule(-1, 10, 1.0, 0.1), ConfigError);
  CHECK_THROWS_AS(lr_schedule(11, 10, 1.0, 0.1), ConfigError);
}

TEST_CASE("adamw fixed points and scalar oracle") {
  ModelConfig mc;
  mc.encoder_dim = 1;
  mc.hidden = 1;
  mc.feat = 1;
  mc.heads = 1;
  mc.len_embed_dim = 1;
  mc.types = 1;
  auto p = make_params<double>(mc);
  TrainConfig cfg;

  // zero gradients, zero weight decay: parameters unchanged
  cfg.weight_decay = 0.0;
  p.out_w.values()[0] = 0.7;
  OptimizerState<double> st;
  adamw_step(p, st, 0.1, cfg);
  CHECK(p.out_w.values()[0] == 0.7);

  // weight decay with zero grads shrinks by (1 - lr*wd)
  cfg.weight_decay = 0.01;
  OptimizerState<double> st2;
  adamw_step(p, st2, 0.1, cfg);
  CHECK(p.out_w.values()[0] == doctest::Approx(0.7 * (1.0 - 0.1 * 0.01)).epsilon(1e-12));

  // one step against the hand-evaluated update formula
  auto q = make_params<double>(mc);
  q.out_w.values()[0] = 0.5;
  q.out_w.grad()[0] = 0.2;
  OptimizerState<double> st3;
  TrainConfig c3;
  c3.weight_decay = 0.01;
  adamw_step(q, st3, 0.1, c3);
  const double m = (1 - 0.9) * 0.2;
  const double v = (1 - 0.999) * 0.2 * 0.2;
  const double mhat = m / (1 - 0.9);
  const double vhat = v / (1 - 0.999);
  const double want = 0.5 - 0.1 * (mhat / (std::sqrt(vhat) + 1e-8)) - 0.1 * 0.01 * 0.5;
  CHECK(q.out_w.values()[0] == doctest::Approx(want).epsilon(1e-12));
  CHECK(!q.out_w.has_grad());  // grads consumed
}

TEST_CASE("config file parsing") {
  const std::string path = "tmp_config.cfg";
  {
    std::ofstream out(path);
    out << "# comment line\n";
    out << "epochs = 7\n";
    out << "learning_rate = 0.004\n";
    out << "cnn_blocks=0\n";
    out << "precision = f64   # trailing comment\n";
  }
  auto cfg = TrainConfig::from_file(path);
  CHECK(cfg.epochs == 7);
  CHECK(cfg.learning_rate == doctest::Approx(0.004));
  CHECK(cfg.cnn_blocks == 0);
  CHECK(cfg.precision == "f64");
  std::remove(path.c_str());

  TrainConfig bad;
  CHECK_THROWS_AS(bad.set("no_such_key", "1"), ConfigError);
  CHECK_THROWS_AS(bad.set("epochs", "many"), ConfigError);
  bad.threshold = 1.5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  // round trip through the serialized form
  TrainConfig src = small_config();
  const std::string kv_path = "tmp_config2.cfg";
  {
    std::ofstream out(kv_path);
    out << src.to_kv();
  }
  auto back = TrainConfig::from_file(kv_path);
  CHECK(back.epochs == src.epochs);
  CHECK(back.learning_rate == src.learning_rate);
  CHECK(back.seed == src.seed);
  std::remove(kv_path.c_str());
}

TEST_CASE("training requires a nonempty train split and bounded lengths") {
  TrainConfig cfg = small_config();
  Corpus empty = make_corpus({}, {}, {});
  CHECK_THROWS_AS(Trainer<double>(cfg, empty), ValidationError);

  Corpus c = small_corpus(8, 3);
  cfg.max_train_len = 4;  // everything is longer
  CHECK_THROWS_AS(Trainer<double>(cfg, c), ValidationError);
}

TEST_CASE("loss at initialization is ln 2 when the head starts at zero") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(8, 3);
  Trainer<double> trainer(cfg, c);
  std::fill(trainer.params().out_w.values().begin(), trainer.params().out_w.values().end(), 0.0);
  std::fill(trainer.params().out_b.values().begin(), trainer.params().out_b.values().end(), 0.0);
  const double loss = trainer.train_batch({0, 1, 2, 3});
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("two runs with the same seed produce identical logs at 64-bit") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(10, 4);
  Trainer<double> a(cfg, c);
  Trainer<double> b(cfg, c);
  auto la = a.run("", "");
  auto lb = b.run("", "");
  REQUIRE(la.size() == lb.size());
  for (size_t i = 0; i < la.size(); ++i) CHECK(la[i].line == lb[i].line);

  auto pa = a.params().all();
  auto pb = b.params().all();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
}

TEST_CASE("one-step resume from a checkpoint matches uninterrupted training") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(8, 6);
  const std::string path = "tmp_resume.ckpt";

  Trainer<double> t1(cfg, c);
  // advance one step so moments are nonzero, then snapshot
  t1.train_batch({0, 1, 2});
  save_checkpoint(path, t1.meta(), t1.params(), t1.optimizer_extras());

  const double l1 = t1.train_batch({3, 4, 5});

  auto ck = load_checkpoint<double>(path);
  Trainer<double> t2(cfg, c, ck);
  const double l2 = t2.train_batch({3, 4, 5});

  CHECK(l1 == l2);
  auto pa = t1.params().all();
  auto pb = t2.params().all();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
  std::remove(path.c_str());
}

TEST_CASE("epoch-level resume through files matches uninterrupted training") {
  TrainConfig cfg = small_config();
  cfg.epochs = 3;
  Corpus c = small_corpus(10, 8);
  const std::string last = "tmp_last.ckpt";

  Trainer<double> full(cfg, c);
  auto full_logs = full.run("", "");

  Trainer<double> part(cfg, c);
  part.run("", last, nullptr, /*epoch_limit=*/1);
  auto ck = load_checkpoint<double>(last);
  Trainer<double> resumed(cfg, c, ck);
  auto tail_logs = resumed.run("", "");

  REQUIRE(full_logs.size() == 3);
  REQUIRE(tail_logs.size() == 2);
  CHECK(full_logs[1].line == tail_logs[0].line);
  CHECK(full_logs[2].line == tail_logs[1].line);
  auto pa = full.params().all();
  auto pb = resumed.params().all();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].values() == pb[i].values());
  std::remove(last.c_str());
}

TEST_CASE("ten-sentence corpus is memorized within 200 epochs") {
  TrainConfig cfg = small_config();
  cfg.epochs = 200;
  cfg.batch_size = 5;
  cfg.learning_rate = 4e-3;
  SynthOptions opt;
  opt.n_sentences = 10;
  opt.min_len = 5;
  opt.max_len = 10;
  opt.nesting_rate = 0.3;
  opt.seed = 9;
  auto sentences = synth_generate(opt);
  Corpus c = make_corpus(sentences, sentences, {});
  Trainer<float> trainer(cfg, c);
  trainer.run("", "");
  auto report = evaluate_model(trainer.params(), trainer.model_config(), trainer.vocab(),
                               trainer.types(), c.train, 0.5);
  CHECK(report.micro.f1 == doctest::Approx(1.0));

  // evaluating the same frozen model twice gives the identical report
  auto again = evaluate_model(trainer.params(), trainer.model_config(), trainer.vocab(),
                              trainer.types(), c.train, 0.5);
  CHECK(metrics_report_json(report) == metrics_report_json(again));
}

TEST_CASE("untrained zero-head model predicts nothing") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(6, 10);
  Trainer<double> trainer(cfg, c);
  std::fill(trainer.params().out_w.values().begin(), trainer.params().out_w.values().end(), 0.0);
  std::fill(trainer.params().out_b.values().begin(), trainer.params().out_b.values().end(), 0.0);
  auto report = evaluate_model(trainer.params(), trainer.model_config(), trainer.vocab(),
                               trainer.types(), c.train, 0.5);
  CHECK(report.micro.predicted == 0);
  CHECK(report.micro.recall == 0.0);
}

TEST_CASE("per-sentence losses are batch-size invariant") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(9, 12);
  Trainer<float> trainer(cfg, c);
  auto one = per_sentence_losses(trainer.params(), trainer.model_config(), trainer.vocab(),
                                 trainer.types(), c.train, 1);
  auto eight = per_sentence_losses(trainer.params(), trainer.model_config(), trainer.vocab(),
                                   trainer.types(), c.train, 8);
  REQUIRE(one.size() == eight.size());
  for (size_t i = 0; i < one.size(); ++i) CHECK(std::abs(one[i] - eight[i]) < 1e-6);
}

TEST_CASE("prediction files round-trip and handle edge sentences") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(6, 14);
  Trainer<double> trainer(cfg, c);

  std::vector<Sentence> probes;
  {
    Sentence empty;  // no tokens: must come back with no entities
    probes.push_back(empty);
    Sentence single;
    single.tokens = {"b0"};
    probes.push_back(single);
    probes.push_back(c.train[0]);
  }
  auto preds = predict_model(trainer.params(), trainer.model_config(), trainer.vocab(), probes,
                             0.5);
  REQUIRE(preds.size() == 3);
  CHECK(preds[0].empty());
  for (const auto& e : preds[1]) {
    CHECK(e.start == 0);
    CHECK(e.end == 0);  // only candidate span of a single-token sentence
  }

  const std::string path = "tmp_preds.jsonl";
  save_predictions(path, probes, preds, trainer.types());
  auto loaded = load_sentences(path);  // scores ignored on load
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].tokens.empty());
  CHECK(loaded[0].entities.empty());
  CHECK(loaded[1].tokens == probes[1].tokens);
  std::remove(path.c_str());

  // empty input file: empty output file
  const std::string in_path = "tmp_empty_in.jsonl";
  const std::string out_path = "tmp_empty_out.jsonl";
  {
    std::ofstream out(in_path);
  }
  auto none = load_sentences(in_path);
  auto none_preds = predict_model(trainer.params(), trainer.model_config(), trainer.vocab(),
                                  none, 0.5);
  save_predictions(out_path, none, none_preds, trainer.types());
  CHECK(load_sentences(out_path).empty());
  std::remove(in_path.c_str());
  std::remove(out_path.c_str());
}

TEST_CASE("resume rejects a mismatched configuration") {
  TrainConfig cfg = small_config();
  Corpus c = small_corpus(6, 16);
  Trainer<double> trainer(cfg, c);
  const std::string path = "tmp_mismatch.ckpt";
  save_checkpoint(path, trainer.meta(), trainer.params(), trainer.optimizer_extras());
  auto ck = load_checkpoint<double>(path);
  TrainConfig other = cfg;
  other.hidden_size = 32;
  CHECK_THROWS_AS(Trainer<double>(other, c, ck), VersionError);
  std::remove(path.c_str());
}
