#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "nner/metrics.hpp"

using namespace nner;

TEST_CASE("micro PRF trivial cases") {
  std::vector<std::vector<Entity>> gold{{{0, 1, "A"}, {3, 4, "B"}}};
  auto perfect = micro_prf(gold, gold);
  CHECK(perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  auto empty = micro_prf({{}}, gold);
  CHECK(empty.precision == 0.0);
  CHECK(empty.recall == 0.0);
  CHECK(empty.f1 == 0.0);

  auto both_empty = micro_prf({{}}, {{}});
  CHECK(both_empty.f1 == 0.0);
}

TEST_CASE("micro PRF hand-counted case: 2 correct of 4 predicted, 3 gold") {
  std::vector<std::vector<Entity>> pred{
      {{0, 1, "A"}, {2, 2, "B"}, {4, 5, "A"}, {6, 6, "C"}}};
  std::vector<std::vector<Entity>> gold{{{0, 1, "A"}, {2, 2, "B"}, {7, 8, "A"}}};
  auto m = micro_prf(pred, gold);
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(2.0 / 3.0));
  CHECK(m.f1 == doctest::Approx(4.0 / 7.0));
  // exact harmonic mean identity
  CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
}

TEST_CASE("flat/nested classification") {
  // disjoint spans: all flat
  std::vector<Entity> disjoint{{0, 1, "A"}, {3, 4, "B"}, {6, 6, "A"}};
  auto f1 = nested_flags(disjoint);
  for (bool b : f1) CHECK(!b);

  // containment marks both
  std::vector<Entity> pair{{2, 4, "A"}, {2, 3, "B"}};
  auto f2 = nested_flags(pair);
  CHECK(f2[0]);
  CHECK(f2[1]);

  // chain of overlaps marks all three
  std::vector<Entity> chain{{0, 5, "A"}, {4, 8, "B"}, {8, 9, "C"}};
  auto f3 = nested_flags(chain);
  CHECK(f3[0]);
  CHECK(f3[1]);
  CHECK(f3[2]);

  // flat + nested counts partition the set
  auto partition_holds = [](const std::vector<Entity>& set) {
    auto flags = nested_flags(set);
    size_t nested = 0, flat = 0;
    for (bool b : flags) (b ? nested : flat) += 1;
    return nested + flat == set.size();
  };
  CHECK(partition_holds(disjoint));
  CHECK(partition_holds(pair));
  CHECK(partition_holds(chain));
}

TEST_CASE("classification is order-invariant") {
  std::vector<Entity> a{{2, 4, "A"}, {2, 3, "B"}, {7, 8, "C"}};
  std::vector<Entity> b{{7, 8, "C"}, {2, 3, "B"}, {2, 4, "A"}};
  auto fa = nested_flags(a);
  auto fb = nested_flags(b);
  CHECK(fa[0] == fb[2]);
  CHECK(fa[1] == fb[1]);
  CHECK(fa[2] == fb[0]);
}

TEST_CASE("flat/nested breakdown: perfect prediction") {
  std::vector<std::vector<Entity>> gold{{{0, 2, "A"}, {1, 2, "B"}, {5, 6, "C"}}};
  auto fn = fep_fer_nep_ner(gold, gold);
  REQUIRE(fn.fep.has_value());
  REQUIRE(fn.fer.has_value());
  REQUIRE(fn.nep.has_value());
  REQUIRE(fn.ner.has_value());
  CHECK(*fn.fep == 1.0);
  CHECK(*fn.fer == 1.0);
  CHECK(*fn.nep == 1.0);
  CHECK(*fn.ner == 1.0);
  CHECK(fn.gold_flat == 1);
  CHECK(fn.gold_nested == 2);
}

TEST_CASE("flat/nested breakdown: the nested-pair hand trace") {
  // gold has a nested pair; the prediction finds only the outer span, so it
  // is flat within its own set. NER counts gold-nested entities found by
  // the prediction: one of two.
  std::vector<std::vector<Entity>> gold{{{0, 2, "A"}, {1, 2, "B"}}};
  std::vector<std::vector<Entity>> pred{{{0, 2, "A"}}};
  auto fn = fep_fer_nep_ner(pred, gold);
  REQUIRE(fn.fep.has_value());
  CHECK(*fn.fep == 1.0);       // the one flat prediction is in gold
  CHECK(!fn.fer.has_value());  // gold has no flat entities
  REQUIRE(fn.ner.has_value());
  CHECK(*fn.ner == 0.5);       // (0,2,A) of the two gold nested spans was found
  CHECK(!fn.nep.has_value());  // no nested predictions
  CHECK(fn.pred_flat == 1);
  CHECK(fn.gold_nested == 2);
}

TEST_CASE("flat/nested breakdown: no nesting anywhere") {
  std::vector<std::vector<Entity>> gold{{{0, 1, "A"}}, {{2, 3, "B"}}};
  auto fn = fep_fer_nep_ner(gold, gold);
  CHECK(*fn.fep == 1.0);
  CHECK(*fn.fer == 1.0);
  CHECK(!fn.nep.has_value());
  CHECK(!fn.ner.has_value());
}

TEST_CASE("against-gold convention classifies predictions by gold overlap") {
  // the lone prediction overlaps a gold entity, so it counts as nested
  // under AgainstGold even though its own set has no other members
  std::vector<std::vector<Entity>> gold{{{0, 2, "A"}, {1, 2, "B"}}};
  std::vector<std::vector<Entity>> pred{{{0, 2, "A"}}};
  auto fn = fep_fer_nep_ner(pred, gold, FlatnessConvention::AgainstGold);
  CHECK(fn.pred_flat == 0);
  CHECK(fn.pred_nested == 1);
  REQUIRE(fn.nep.has_value());
  CHECK(*fn.nep == 1.0);
  CHECK(!fn.fep.has_value());
}

TEST_CASE("full report on an all-correct corpus") {
  std::vector<std::vector<Entity>> gold{{{0, 2, "A"}, {1, 2, "B"}},
                                        {{0, 0, "A"}},
                                        {}};
  auto report = compute_metrics(gold, gold);
  CHECK(report.micro.f1 == 1.0);
  CHECK(*report.flat_nested.fep == 1.0);
  CHECK(*report.flat_nested.ner == 1.0);
  CHECK(report.per_type.at("A").f1 == 1.0);
  CHECK(report.per_type.at("B").f1 == 1.0);

  const std::string j = metrics_report_json(report);
  CHECK(j.find("\"micro\"") != std::string::npos);
  CHECK(j.find("\"supports\"") != std::string::npos);
}

TEST_CASE("fractions stay within [0,1] and respect the F1 identity") {
  Rng rng(31);
  for (int rep = 0; rep < 60; ++rep) {
    std::vector<std::vector<Entity>> pred(3), gold(3);
    for (int s = 0; s < 3; ++s) {
      for (int k = 0; k < 3; ++k) {
        int64_t a = rng.below(6);
        int64_t len = rng.below(3);
        Entity e{a, a + len, str("T", rng.below(2))};
        Sentence probe;
        probe.tokens.assign(10, "w");
        if (rng.below(2)) {
          probe.entities = gold[s];
          probe.entities.push_back(e);
          try {
            validate_sentence(probe, "gen");
            gold[s].push_back(e);
          } catch (const ValidationError&) {
          }
        } else {
          pred[s].push_back(e);
        }
      }
    }
    auto report = compute_metrics(pred, gold);
    for (double v : {report.micro.precision, report.micro.recall, report.micro.f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(report.micro.f1 <= std::max(report.micro.precision, report.micro.recall) + 1e-12);
    if (report.micro.precision + report.micro.recall > 0) {
      CHECK(report.micro.f1 ==
            doctest::Approx(2 * report.micro.precision * report.micro.recall /
                            (report.micro.precision + report.micro.recall)));
    }
    for (auto& opt : {report.flat_nested.fep, report.flat_nested.fer, report.flat_nested.nep,
                      report.flat_nested.ner}) {
      if (opt) {
        CHECK(*opt >= 0.0);
        CHECK(*opt <= 1.0);
      }
    }
    // flat + nested partitions each side
    const auto& fn = report.flat_nested;
    int64_t gold_unique = 0, pred_unique = 0;
    for (int s = 0; s < 3; ++s) {
      gold_unique += static_cast<int64_t>(
          std::set<Entity>(gold[s].begin(), gold[s].end()).size());
      pred_unique += static_cast<int64_t>(
          std::set<Entity>(pred[s].begin(), pred[s].end()).size());
    }
    CHECK(fn.gold_flat + fn.gold_nested == gold_unique);
    CHECK(fn.pred_flat + fn.pred_nested == pred_unique);
  }
}
