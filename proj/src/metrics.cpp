#include "nner/metrics.hpp"

#include <json.hpp>
#include <set>

namespace nner {

namespace {

PRF finish_prf(int64_t matched, int64_t predicted, int64_t gold) {
  PRF m;
  m.matched = matched;
  m.predicted = predicted;
  m.gold = gold;
  m.precision = predicted > 0 ? static_cast<double>(matched) / predicted : 0.0;
  m.recall = gold > 0 ? static_cast<double>(matched) / gold : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

bool overlaps(const Entity& a, const Entity& b) {
  return a.start <= b.end && b.start <= a.end;
}

void check_aligned(const std::vector<std::vector<Entity>>& pred,
                   const std::vector<std::vector<Entity>>& gold) {
  if (pred.size() != gold.size()) {
    throw ContractError(str("metrics: ", pred.size(), " prediction sets vs ", gold.size(),
                            " gold sets"));
  }
}

}  // namespace

PRF micro_prf(const std::vector<std::vector<Entity>>& pred,
              const std::vector<std::vector<Entity>>& gold) {
  check_aligned(pred, gold);
  int64_t matched = 0, n_pred = 0, n_gold = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    std::set<Entity> p(pred[i].begin(), pred[i].end());
    std::set<Entity> g(gold[i].begin(), gold[i].end());
    n_pred += static_cast<int64_t>(p.size());
    n_gold += static_cast<int64_t>(g.size());
    for (const auto& e : p) matched += g.count(e);
  }
  return finish_prf(matched, n_pred, n_gold);
}

std::vector<bool> nested_flags(const std::vector<Entity>& set) {
  std::vector<bool> flags(set.size(), false);
  for (size_t a = 0; a < set.size(); ++a) {
    for (size_t b = 0; b < set.size(); ++b) {
      if (a != b && overlaps(set[a], set[b])) {
        flags[a] = true;
        break;
      }
    }
  }
  return flags;
}

FlatNested fep_fer_nep_ner(const std::vector<std::vector<Entity>>& pred,
                           const std::vector<std::vector<Entity>>& gold,
                           FlatnessConvention convention) {
  check_aligned(pred, gold);
  FlatNested out;
  int64_t pred_flat_hit = 0, pred_nested_hit = 0;
  int64_t gold_flat_hit = 0, gold_nested_hit = 0;

  for (size_t i = 0; i < pred.size(); ++i) {
    std::set<Entity> gold_set(gold[i].begin(), gold[i].end());
    std::set<Entity> pred_set(pred[i].begin(), pred[i].end());

    std::vector<Entity> preds(pred_set.begin(), pred_set.end());
    std::vector<bool> pred_nested;
    if (convention == FlatnessConvention::WithinOwnSet) {
      pred_nested = nested_flags(preds);
    } else {
      pred_nested.assign(preds.size(), false);
      for (size_t a = 0; a < preds.size(); ++a) {
        for (const auto& g : gold_set) {
          if (g != preds[a] && overlaps(preds[a], g)) {
            pred_nested[a] = true;
            break;
          }
        }
      }
    }
    for (size_t a = 0; a < preds.size(); ++a) {
      const bool hit = gold_set.count(preds[a]) > 0;
      if (pred_nested[a]) {
        ++out.pred_nested;
        pred_nested_hit += hit;
      } else {
        ++out.pred_flat;
        pred_flat_hit += hit;
      }
    }

    std::vector<Entity> golds(gold_set.begin(), gold_set.end());
    auto gflags = nested_flags(golds);
    for (size_t a = 0; a < golds.size(); ++a) {
      const bool hit = pred_set.count(golds[a]) > 0;
      if (gflags[a]) {
        ++out.gold_nested;
        gold_nested_hit += hit;
      } else {
        ++out.gold_flat;
        gold_flat_hit += hit;
      }
    }
  }

  if (out.pred_flat > 0) out.fep = static_cast<double>(pred_flat_hit) / out.pred_flat;
  if (out.gold_flat > 0) out.fer = static_cast<double>(gold_flat_hit) / out.gold_flat;
  if (out.pred_nested > 0) out.nep = static_cast<double>(pred_nested_hit) / out.pred_nested;
  if (out.gold_nested > 0) out.ner = static_cast<double>(gold_nested_hit) / out.gold_nested;
  return out;
}

MetricsReport compute_metrics(const std::vector<std::vector<Entity>>& pred,
                              const std::vector<std::vector<Entity>>& gold,
                              FlatnessConvention convention) {
  MetricsReport report;
  report.micro = micro_prf(pred, gold);
  report.flat_nested = fep_fer_nep_ner(pred, gold, convention);

  std::set<std::string> types;
  for (const auto& sent : pred)
    for (const auto& e : sent) types.insert(e.type);
  for (const auto& sent : gold)
    for (const auto& e : sent) types.insert(e.type);
  for (const auto& type : types) {
    auto filter = [&](const std::vector<std::vector<Entity>>& sets) {
      std::vector<std::vector<Entity>> kept(sets.size());
      for (size_t i = 0; i < sets.size(); ++i)
        for (const auto& e : sets[i])
          if (e.type == type) kept[i].push_back(e);
      return kept;
    };
    report.per_type[type] = micro_prf(filter(pred), filter(gold));
  }
  return report;
}

std::string metrics_report_json(const MetricsReport& report) {
  using json = nlohmann::json;
  auto prf_json = [](const PRF& m) {
    return json{{"precision", m.precision}, {"recall", m.recall},   {"f1", m.f1},
                {"matched", m.matched},     {"predicted", m.predicted}, {"gold", m.gold}};
  };
  auto opt_json = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json j;
  j["micro"] = prf_json(report.micro);
  j["flat_nested"] = {{"fep", opt_json(report.flat_nested.fep)},
                      {"fer", opt_json(report.flat_nested.fer)},
                      {"nep", opt_json(report.flat_nested.nep)},
                      {"ner", opt_json(report.flat_nested.ner)},
                      {"supports",
                       {{"pred_flat", report.flat_nested.pred_flat},
                        {"pred_nested", report.flat_nested.pred_nested},
                        {"gold_flat", report.flat_nested.gold_flat},
                        {"gold_nested", report.flat_nested.gold_nested}}}};
  j["per_type"] = json::object();
  for (const auto& [type, m] : report.per_type) j["per_type"][type] = prf_json(m);
  return j.dump(2);
}

}  // namespace nner
