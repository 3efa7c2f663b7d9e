#include "nner/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <unordered_map>

namespace nner {

using json = nlohmann::json;

// ------------------------------------------------------------ persistence

void validate_sentence(const Sentence& s, const std::string& where) {
  const int64_t n = static_cast<int64_t>(s.tokens.size());
  for (const auto& e : s.entities) {
    if (e.start < 0 || e.end < e.start || e.end >= n) {
      throw ValidationError(str(where, ": entity (", e.start, ",", e.end, ",", e.type,
                                ") out of range for ", n, " tokens"));
    }
    if (e.type.empty()) throw ValidationError(str(where, ": entity with empty type"));
  }
  for (size_t a = 0; a < s.entities.size(); ++a) {
    for (size_t b = a + 1; b < s.entities.size(); ++b) {
      const Entity& x = s.entities[a];
      const Entity& y = s.entities[b];
      const bool crossing = (x.start < y.start && y.start <= x.end && x.end < y.end) ||
                            (y.start < x.start && x.start <= y.end && y.end < x.end);
      if (crossing) {
        throw ValidationError(str(where, ": crossing entities (", x.start, ",", x.end, ",",
                                  x.type, ") and (", y.start, ",", y.end, ",", y.type, ")"));
      }
    }
  }
}

namespace {

Sentence sentence_from_json(const json& j, const std::string& where) {
  Sentence s;
  if (!j.is_object() || !j.contains("tokens") || !j.at("tokens").is_array()) {
    throw ValidationError(str(where, ": record must be an object with a tokens array"));
  }
  for (const auto& t : j.at("tokens")) {
    if (!t.is_string()) throw ValidationError(str(where, ": tokens must be strings"));
    s.tokens.push_back(t.get<std::string>());
  }
  if (j.contains("entities")) {
    if (!j.at("entities").is_array()) {
      throw ValidationError(str(where, ": entities must be an array"));
    }
    for (const auto& je : j.at("entities")) {
      Entity e;
      try {
        e.start = je.at("start").get<int64_t>();
        e.end = je.at("end").get<int64_t>();
        e.type = je.at("type").get<std::string>();
      } catch (const json::exception& ex) {
        throw ValidationError(str(where, ": bad entity record: ", ex.what()));
      }
      s.entities.push_back(std::move(e));
    }
  }
  if (j.contains("doc_id")) {
    if (j.at("doc_id").is_string()) {
      s.doc_id = j.at("doc_id").get<std::string>();
    } else if (j.at("doc_id").is_number()) {
      s.doc_id = str(j.at("doc_id").get<int64_t>());
    } else {
      throw ValidationError(str(where, ": doc_id must be a string or number"));
    }
  }
  validate_sentence(s, where);
  return s;
}

json sentence_to_json(const Sentence& s) {
  json ents = json::array();
  for (const auto& e : s.entities) {
    ents.push_back({{"start", e.start}, {"end", e.end}, {"type", e.type}});
  }
  return json{{"tokens", s.tokens}, {"entities", std::move(ents)}, {"doc_id", s.doc_id}};
}

}  // namespace

std::vector<Sentence> load_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError(str("cannot open: ", path));
  std::vector<Sentence> out;
  std::string line;
  int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ValidationError(str(path, " line ", line_no, ": ", e.what()));
    }
    out.push_back(sentence_from_json(j, str(path, " line ", line_no)));
  }
  return out;
}

void save_sentences(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(str("cannot open for writing: ", path));
  for (const auto& s : sentences) out << sentence_to_json(s).dump() << "\n";
  if (!out) throw IoError(str("write failed: ", path));
}

std::vector<std::string> collect_types(const std::vector<const std::vector<Sentence>*>& splits) {
  std::set<std::string> uniq;
  for (const auto* split : splits) {
    for (const auto& s : *split) {
      for (const auto& e : s.entities) uniq.insert(e.type);
    }
  }
  return {uniq.begin(), uniq.end()};
}

Corpus make_corpus(std::vector<Sentence> train, std::vector<Sentence> dev,
                   std::vector<Sentence> test) {
  Corpus c;
  c.train = std::move(train);
  c.dev = std::move(dev);
  c.test = std::move(test);
  c.types = collect_types({&c.train, &c.dev, &c.test});
  return c;
}

std::map<std::string, int64_t> type_index(const std::vector<std::string>& types) {
  std::map<std::string, int64_t> idx;
  for (size_t i = 0; i < types.size(); ++i) idx[types[i]] = static_cast<int64_t>(i);
  return idx;
}

// ---------------------------------------------------------------- targets

std::vector<uint8_t> build_targets(const Sentence& s,
                                   const std::map<std::string, int64_t>& type_ids,
                                   int64_t num_types) {
  const int64_t n = static_cast<int64_t>(s.tokens.size());
  std::vector<uint8_t> y(static_cast<size_t>(n * n * num_types), 0);
  for (const auto& e : s.entities) {
    auto it = type_ids.find(e.type);
    if (it == type_ids.end()) {
      throw ValidationError(str("build_targets: unknown type ", e.type));
    }
    const int64_t t = it->second;
    y[static_cast<size_t>((e.start * n + e.end) * num_types + t)] = 1;
    y[static_cast<size_t>((e.end * n + e.start) * num_types + t)] = 1;
  }
  return y;
}

// ------------------------------------------------------------ preprocessing

std::vector<Sentence> split_sentences_entity_safe(const Sentence& document,
                                                  const std::vector<int64_t>& boundaries) {
  const int64_t n = static_cast<int64_t>(document.tokens.size());
  int64_t prev = 0;
  for (int64_t b : boundaries) {
    if (b <= 0 || b >= n) {
      throw ValidationError(str("split: boundary ", b, " outside document of ", n, " tokens"));
    }
    if (b <= prev) throw ValidationError("split: boundaries must be strictly increasing");
    prev = b;
  }

  // a cut before token b splits entity (s,e) iff s < b <= e
  std::vector<int64_t> cuts;
  for (int64_t b : boundaries) {
    bool inside = false;
    for (const auto& e : document.entities) {
      if (e.start < b && b <= e.end) {
        inside = true;
        break;
      }
    }
    if (!inside) cuts.push_back(b);
  }
  cuts.push_back(n);

  std::vector<Sentence> out;
  int64_t begin = 0;
  for (int64_t cut : cuts) {
    Sentence piece;
    piece.doc_id = document.doc_id;
    piece.tokens.assign(document.tokens.begin() + begin, document.tokens.begin() + cut);
    for (const auto& e : document.entities) {
      if (e.start >= begin && e.end < cut) {
        piece.entities.push_back({e.start - begin, e.end - begin, e.type});
      }
    }
    out.push_back(std::move(piece));
    begin = cut;
  }
  return out;
}

namespace {

std::string text_key(const std::vector<std::string>& tokens) {
  std::string key;
  for (const auto& t : tokens) {
    key += t;
    key += '\x1f';
  }
  return key;
}

std::set<Entity> entity_set(const Sentence& s) { return {s.entities.begin(), s.entities.end()}; }

}  // namespace

AuditReport audit(const std::vector<Sentence>& sentences) {
  AuditReport report;

  // duplicates: identical triples repeated within one sentence
  for (size_t i = 0; i < sentences.size(); ++i) {
    std::map<Entity, int64_t> counts;
    for (const auto& e : sentences[i].entities) ++counts[e];
    for (const auto& [e, c] : counts) {
      if (c > 1) report.duplicates.push_back({static_cast<int64_t>(i), e, c});
    }
  }

  // conflicts: same token sequence annotated differently somewhere
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<int64_t>> groups;
  for (size_t i = 0; i < sentences.size(); ++i) {
    const std::string key = text_key(sentences[i].tokens);
    auto [it, fresh] = groups.try_emplace(key);
    if (fresh) order.push_back(key);
    it->second.push_back(static_cast<int64_t>(i));
  }
  for (const auto& key : order) {
    const auto& members = groups.at(key);
    if (members.size() < 2) continue;
    std::set<std::set<Entity>> distinct;
    for (int64_t idx : members) distinct.insert(entity_set(sentences[static_cast<size_t>(idx)]));
    if (distinct.size() < 2) continue;
    AuditReport::ConflictGroup group;
    group.tokens = sentences[static_cast<size_t>(members.front())].tokens;
    group.sentence_indices = members;
    group.distinct_annotations = static_cast<int64_t>(distinct.size());
    report.conflicts.push_back(std::move(group));
  }
  return report;
}

std::vector<Sentence> audit_fix(const std::vector<Sentence>& sentences) {
  const AuditReport report = audit(sentences);
  std::set<int64_t> drop;
  for (const auto& group : report.conflicts) {
    // keep the first occurrence, drop the rest of the group
    for (size_t i = 1; i < group.sentence_indices.size(); ++i) {
      drop.insert(group.sentence_indices[i]);
    }
  }
  std::vector<Sentence> out;
  for (size_t i = 0; i < sentences.size(); ++i) {
    if (drop.count(static_cast<int64_t>(i))) continue;
    Sentence s = sentences[i];
    std::set<Entity> seen;
    std::vector<Entity> dedup;
    for (const auto& e : s.entities) {
      if (seen.insert(e).second) dedup.push_back(e);
    }
    s.entities = std::move(dedup);
    out.push_back(std::move(s));
  }
  return out;
}

std::string audit_report_json(const AuditReport& report) {
  json j;
  j["conflicts"] = json::array();
  for (const auto& g : report.conflicts) {
    j["conflicts"].push_back({{"tokens", g.tokens},
                              {"sentence_indices", g.sentence_indices},
                              {"distinct_annotations", g.distinct_annotations}});
  }
  j["duplicates"] = json::array();
  for (const auto& d : report.duplicates) {
    j["duplicates"].push_back({{"sentence_index", d.sentence_index},
                               {"start", d.entity.start},
                               {"end", d.entity.end},
                               {"type", d.entity.type},
                               {"count", d.count}});
  }
  j["clean"] = report.clean();
  return j.dump(2);
}

// ------------------------------------------------------------- statistics

SplitStats split_stats(const std::vector<Sentence>& sentences) {
  SplitStats st;
  st.sentences = static_cast<int64_t>(sentences.size());
  int64_t token_total = 0, mention_len_total = 0;
  for (const auto& s : sentences) {
    token_total += static_cast<int64_t>(s.tokens.size());
    st.mentions += static_cast<int64_t>(s.entities.size());
    const auto& ents = s.entities;
    for (size_t a = 0; a < ents.size(); ++a) {
      mention_len_total += ents[a].end - ents[a].start + 1;
      for (size_t b = 0; b < ents.size(); ++b) {
        if (a == b) continue;
        if (ents[a].start <= ents[b].end && ents[b].start <= ents[a].end) {
          ++st.overlapping_mentions;
          break;
        }
      }
    }
  }
  if (st.sentences > 0) {
    st.avg_sentence_len = static_cast<double>(token_total) / static_cast<double>(st.sentences);
  }
  if (st.mentions > 0) {
    st.avg_mention_len = static_cast<double>(mention_len_total) / static_cast<double>(st.mentions);
  }
  return st;
}

namespace {

json stats_to_json(const SplitStats& st) {
  return json{{"sentences", st.sentences},
              {"mentions", st.mentions},
              {"avg_sentence_len", st.avg_sentence_len},
              {"avg_mention_len", st.avg_mention_len},
              {"overlapping_mentions", st.overlapping_mentions}};
}

}  // namespace

std::string stats_report_json(const Corpus& corpus) {
  json j{{"train", stats_to_json(split_stats(corpus.train))},
         {"dev", stats_to_json(split_stats(corpus.dev))},
         {"test", stats_to_json(split_stats(corpus.test))},
         {"types", corpus.types}};
  return j.dump(2);
}

// ---------------------------------------------------------- document split

Corpus document_split(const std::vector<Sentence>& sentences, double train_ratio,
                      double dev_ratio, double test_ratio, uint64_t seed) {
  std::vector<std::string> doc_order;
  std::unordered_map<std::string, std::vector<const Sentence*>> docs;
  for (const auto& s : sentences) {
    auto [it, fresh] = docs.try_emplace(s.doc_id);
    if (fresh) doc_order.push_back(s.doc_id);
    it->second.push_back(&s);
  }
  const int64_t n_docs = static_cast<int64_t>(doc_order.size());
  if (n_docs < 3) {
    throw ValidationError(str("document_split: need at least 3 documents, got ", n_docs));
  }
  const double total = train_ratio + dev_ratio + test_ratio;
  if (total <= 0 || train_ratio < 0 || dev_ratio < 0 || test_ratio < 0) {
    throw ValidationError("document_split: ratios must be nonnegative with a positive sum");
  }

  Rng rng(seed);
  rng.shuffle(doc_order);

  int64_t n_dev = std::max<int64_t>(1, std::llround(n_docs * dev_ratio / total));
  int64_t n_test = std::max<int64_t>(1, std::llround(n_docs * test_ratio / total));
  if (n_dev + n_test > n_docs - 1) {
    n_dev = 1;
    n_test = 1;
  }
  const int64_t n_train = n_docs - n_dev - n_test;

  std::vector<Sentence> train, dev, test;
  for (int64_t i = 0; i < n_docs; ++i) {
    auto* dst = i < n_train ? &train : (i < n_train + n_dev ? &dev : &test);
    for (const Sentence* s : docs.at(doc_order[static_cast<size_t>(i)])) dst->push_back(*s);
  }
  return make_corpus(std::move(train), std::move(dev), std::move(test));
}

// ---------------------------------------------------------- synthetic data

std::vector<Sentence> synth_generate(const SynthOptions& opt) {
  if (opt.num_types < 1) throw ValidationError("synth: need at least one type");
  if (opt.min_len < 1 || opt.max_len < opt.min_len) {
    throw ValidationError(str("synth: bad length range [", opt.min_len, ",", opt.max_len, "]"));
  }
  if (opt.nesting_rate < 0.0 || opt.nesting_rate > 1.0) {
    throw ValidationError("synth: nesting_rate must be in [0,1]");
  }
  // marker tokens: b/e (flat), B/E (nested outer), u (single), im (inner)
  const int64_t marker_count = 5 * opt.num_types + 1;
  const int64_t fillers = opt.vocab_size - marker_count;
  if (fillers < 5) {
    throw ValidationError(str("synth: vocab of ", opt.vocab_size, " cannot host ", marker_count,
                              " marker tokens plus fillers"));
  }

  Rng rng(opt.seed);
  std::vector<Sentence> out;
  out.reserve(static_cast<size_t>(opt.n_sentences));
  int64_t mentions = 0, overlapped = 0;

  for (int64_t si = 0; si < opt.n_sentences; ++si) {
    const int64_t len = opt.min_len + rng.below(opt.max_len - opt.min_len + 1);
    Sentence s;
    s.doc_id = str("d", si);
    s.tokens.resize(static_cast<size_t>(len));
    for (auto& tok : s.tokens) tok = str("w", rng.below(fillers));

    // distinct types for this sentence's top-level entities
    std::vector<int64_t> type_order(static_cast<size_t>(opt.num_types));
    for (size_t i = 0; i < type_order.size(); ++i) type_order[i] = static_cast<int64_t>(i);
    rng.shuffle(type_order);
    int64_t want_entities = rng.below(100) < 15 ? 0 : 1 + rng.below(std::min<int64_t>(opt.num_types, 2));

    int64_t cursor = rng.below(2);
    for (int64_t k = 0; k < want_entities && cursor < len; ++k) {
      const int64_t t = type_order[static_cast<size_t>(k)];
      const int64_t space = len - cursor;

      // steer the realized overlapping-mention fraction toward the target
      const double if_nested = static_cast<double>(overlapped + 2) /
                               static_cast<double>(mentions + 2);
      const double if_plain =
          static_cast<double>(overlapped) / static_cast<double>(mentions + 1);
      const bool steer_nest = std::abs(if_nested - opt.nesting_rate) <=
                              std::abs(if_plain - opt.nesting_rate);
      const bool nest = opt.nesting_rate > 0.0 && steer_nest && space >= 7;

      int64_t elen;
      if (nest) {
        elen = 7 + rng.below(std::min<int64_t>(space, 12) - 7 + 1);
      } else {
        elen = 1 + rng.below(std::min<int64_t>(space, 8));
      }
      const int64_t start = cursor;
      const int64_t end = start + elen - 1;

      if (nest) {
        s.tokens[static_cast<size_t>(start)] = str("B", t);
        s.tokens[static_cast<size_t>(end)] = str("E", t);
        const int64_t is = start + 3, ie = end - 3;
        s.tokens[static_cast<size_t>(is)] = "im";
        s.tokens[static_cast<size_t>(ie)] = "im";
        const int64_t inner_type = (t + 1) % opt.num_types;
        s.entities.push_back({start, end, str("T", t)});
        s.entities.push_back({is, ie, str("T", inner_type)});
        mentions += 2;
        overlapped += 2;
      } else {
        if (elen == 1) {
          s.tokens[static_cast<size_t>(start)] = str("u", t);
        } else {
          s.tokens[static_cast<size_t>(start)] = str("b", t);
          s.tokens[static_cast<size_t>(end)] = str("e", t);
        }
        s.entities.push_back({start, end, str("T", t)});
        mentions += 1;
      }
      cursor = end + 2 + rng.below(2);
    }
    validate_sentence(s, str("synth sentence ", si));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace nner
