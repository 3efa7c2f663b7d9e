#include "nner/decoder.hpp"

#include <algorithm>

namespace nner {

std::vector<std::pair<int64_t, int64_t>> enumerate_spans(int64_t n) {
  std::vector<std::pair<int64_t, int64_t>> spans;
  spans.reserve(static_cast<size_t>(n * (n + 1) / 2));
  for (int64_t s = 0; s < n; ++s)
    for (int64_t e = s; e < n; ++e) spans.emplace_back(s, e);
  return spans;
}

ProbGrid symmetrize(const ProbGrid& p) {
  ProbGrid out = ProbGrid::zeros(p.n, p.types);
  for (int64_t i = 0; i < p.n; ++i) {
    for (int64_t j = i; j < p.n; ++j) {
      for (int64_t t = 0; t < p.types; ++t) {
        const double avg = (p.at(i, j, t) + p.at(j, i, t)) / 2.0;
        out.at(i, j, t) = avg;
        out.at(j, i, t) = avg;
      }
    }
  }
  return out;
}

std::vector<CandidateSpan> prune_and_rank(const ProbGrid& symmetric, double threshold) {
  std::vector<CandidateSpan> kept;
  for (const auto& [s, e] : enumerate_spans(symmetric.n)) {
    CandidateSpan cand;
    cand.start = s;
    cand.end = e;
    cand.scores.resize(static_cast<size_t>(symmetric.types));
    cand.max_score = 0.0;
    for (int64_t t = 0; t < symmetric.types; ++t) {
      cand.scores[static_cast<size_t>(t)] = symmetric.at(s, e, t);
      cand.max_score = std::max(cand.max_score, cand.scores[static_cast<size_t>(t)]);
    }
    if (cand.max_score > threshold) kept.push_back(std::move(cand));
  }
  std::sort(kept.begin(), kept.end(), [](const CandidateSpan& a, const CandidateSpan& b) {
    if (a.max_score != b.max_score) return a.max_score > b.max_score;
    if (a.start != b.start) return a.start < b.start;
    return a.end < b.end;
  });
  return kept;
}

bool spans_cross(int64_t s1, int64_t e1, int64_t s2, int64_t e2) {
  return (s1 < s2 && s2 <= e1 && e1 < e2) || (s2 < s1 && s1 <= e2 && e2 < e1);
}

std::vector<DecodedEntity> greedy_select(const std::vector<CandidateSpan>& ranked,
                                         double threshold, bool multi_label) {
  std::vector<DecodedEntity> accepted;
  for (const auto& cand : ranked) {
    bool blocked = false;
    for (const auto& a : accepted) {
      if (a.start == cand.start && a.end == cand.end) {  // duplicate span
        blocked = true;
        break;
      }
      if (spans_cross(cand.start, cand.end, a.start, a.end)) {
        blocked = true;
        break;
      }
    }
    if (blocked) continue;

    DecodedEntity ent;
    ent.start = cand.start;
    ent.end = cand.end;
    if (multi_label) {
      for (int64_t t = 0; t < static_cast<int64_t>(cand.scores.size()); ++t) {
        if (cand.scores[static_cast<size_t>(t)] > threshold) {
          ent.types.push_back({t, cand.scores[static_cast<size_t>(t)]});
        }
      }
    } else {
      int64_t best = 0;
      for (int64_t t = 1; t < static_cast<int64_t>(cand.scores.size()); ++t) {
        if (cand.scores[static_cast<size_t>(t)] > cand.scores[static_cast<size_t>(best)]) best = t;
      }
      ent.types.push_back({best, cand.scores[static_cast<size_t>(best)]});
    }
    accepted.push_back(std::move(ent));
  }
  return accepted;
}

std::vector<DecodedEntity> decode(const ProbGrid& p, double threshold, bool multi_label) {
  return greedy_select(prune_and_rank(symmetrize(p), threshold), threshold, multi_label);
}

}  // namespace nner
