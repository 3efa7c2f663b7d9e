#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nner/corpus.hpp"

namespace nner {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t matched = 0;
  int64_t predicted = 0;
  int64_t gold = 0;
};

// Entity-level micro precision/recall/F1 over exact (start,end,type)
// matches, aggregated corpus-wide. Empty denominators give 0.
PRF micro_prf(const std::vector<std::vector<Entity>>& pred,
              const std::vector<std::vector<Entity>>& gold);

// flags[i] is true iff entity i shares at least one token position with
// another entity of the same set.
std::vector<bool> nested_flags(const std::vector<Entity>& set);

// Which set an entity's flat/nested status is judged against. WithinOwnSet
// classifies predictions among predictions and gold among gold; AgainstGold
// classifies predictions by overlap with the gold set instead (sensitivity
// mode only).
enum class FlatnessConvention { WithinOwnSet, AgainstGold };

struct FlatNested {
  std::optional<double> fep, fer, nep, ner;  // absent when the denominator is empty
  int64_t pred_flat = 0;
  int64_t pred_nested = 0;
  int64_t gold_flat = 0;
  int64_t gold_nested = 0;
};

FlatNested fep_fer_nep_ner(const std::vector<std::vector<Entity>>& pred,
                           const std::vector<std::vector<Entity>>& gold,
                           FlatnessConvention convention = FlatnessConvention::WithinOwnSet);

struct MetricsReport {
  PRF micro;
  FlatNested flat_nested;
  std::map<std::string, PRF> per_type;
};

MetricsReport compute_metrics(const std::vector<std::vector<Entity>>& pred,
                              const std::vector<std::vector<Entity>>& gold,
                              FlatnessConvention convention = FlatnessConvention::WithinOwnSet);

std::string metrics_report_json(const MetricsReport& report);

}  // namespace nner
