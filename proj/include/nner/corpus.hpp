#pragma once

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nner/common.hpp"

namespace nner {

// Token span with inclusive end: the (start, end, type) triple.
struct Entity {
  int64_t start = 0;
  int64_t end = 0;
  std::string type;
  auto operator<=>(const Entity&) const = default;
};

struct Sentence {
  std::vector<std::string> tokens;
  std::vector<Entity> entities;
  std::string doc_id;
};

struct Corpus {
  std::vector<Sentence> train, dev, test;
  std::vector<std::string> types;  // sorted inventory
};

// ------------------------------------------------------------ persistence
//
// One JSON record per line:
//   {"tokens": [...], "entities": [{"start":s,"end":e,"type":t}], "doc_id": id}
// Unknown fields (e.g. prediction scores) are ignored on load.

// Parses and validates; errors carry the 1-based line number. Crossing
// entities and out-of-range indices are rejected; exact duplicate triples
// are tolerated so the audit can find them.
std::vector<Sentence> load_sentences(const std::string& path);

void save_sentences(const std::string& path, const std::vector<Sentence>& sentences);

// Bounds and crossing checks for one sentence; `where` prefixes messages.
void validate_sentence(const Sentence& s, const std::string& where);

std::vector<std::string> collect_types(const std::vector<const std::vector<Sentence>*>& splits);

Corpus make_corpus(std::vector<Sentence> train, std::vector<Sentence> dev,
                   std::vector<Sentence> test);

std::map<std::string, int64_t> type_index(const std::vector<std::string>& types);

// -------------------------------------------------------------- targets

// Symmetric 0/1 grid: for each entity, cells (s,e) and (e,s) of its type
// channel are set. Size n*n*num_types, row-major.
std::vector<uint8_t> build_targets(const Sentence& s,
                                   const std::map<std::string, int64_t>& type_ids,
                                   int64_t num_types);

// -------------------------------------------------------- preprocessing

// Cuts a document at the candidate boundaries (token indices; a boundary b
// starts a new sentence at token b), except boundaries strictly inside an
// entity, which are suppressed. Entity indices are re-based per sentence;
// no entity is ever dropped.
std::vector<Sentence> split_sentences_entity_safe(const Sentence& document,
                                                  const std::vector<int64_t>& boundaries);

struct AuditReport {
  struct ConflictGroup {
    std::vector<std::string> tokens;
    std::vector<int64_t> sentence_indices;  // all occurrences, in corpus order
    int64_t distinct_annotations = 0;
  };
  struct Duplicate {
    int64_t sentence_index = 0;
    Entity entity;
    int64_t count = 0;
  };
  std::vector<ConflictGroup> conflicts;
  std::vector<Duplicate> duplicates;
  bool clean() const { return conflicts.empty() && duplicates.empty(); }
};

// Finds (a) sentence-text groups annotated differently across occurrences
// and (b) entity triples repeated within one sentence.
AuditReport audit(const std::vector<Sentence>& sentences);

// Removes duplicate triples and, for each conflicting group, keeps only the
// first occurrence in corpus order. Output passes audit cleanly.
std::vector<Sentence> audit_fix(const std::vector<Sentence>& sentences);

std::string audit_report_json(const AuditReport& report);

// ---------------------------------------------------------- statistics

struct SplitStats {
  int64_t sentences = 0;
  int64_t mentions = 0;
  double avg_sentence_len = 0.0;
  double avg_mention_len = 0.0;
  int64_t overlapping_mentions = 0;  // mentions sharing a token with another
};

SplitStats split_stats(const std::vector<Sentence>& sentences);

// Fixed-key JSON report covering all three splits.
std::string stats_report_json(const Corpus& corpus);

// ------------------------------------------------------ document split

// Groups sentences by doc_id, shuffles documents by seed, and partitions
// them by the given ratios; every sentence of a document lands in one
// split. Requires at least three documents.
Corpus document_split(const std::vector<Sentence>& sentences, double train_ratio,
                      double dev_ratio, double test_ratio, uint64_t seed);

// ------------------------------------------------------ synthetic data

struct SynthOptions {
  int64_t vocab_size = 50;
  int64_t n_sentences = 100;
  int64_t min_len = 5;
  int64_t max_len = 15;
  double nesting_rate = 0.3;  // target fraction of mentions that overlap
  int64_t num_types = 3;
  uint64_t seed = 1;
};

// Deterministic by seed. Entity boundaries are marked by type-correlated
// tokens; a nested inner entity sits three tokens inside its outer span
// with type-agnostic boundary markers, so its type is only recoverable
// from the surrounding grid context. Crossing spans are never generated.
std::vector<Sentence> synth_generate(const SynthOptions& opt);

}  // namespace nner
