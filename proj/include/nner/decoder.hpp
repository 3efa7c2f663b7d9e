#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "nner/common.hpp"
#include "nner/tensor.hpp"

namespace nner {

// Per-sentence probability grid with both triangles populated.
struct ProbGrid {
  int64_t n = 0;
  int64_t types = 0;
  std::vector<double> p;  // n*n*types, row-major

  static ProbGrid zeros(int64_t n, int64_t types) {
    ProbGrid g;
    g.n = n;
    g.types = types;
    g.p.assign(static_cast<size_t>(n * n * types), 0.0);
    return g;
  }

  double at(int64_t i, int64_t j, int64_t t) const {
    return p[static_cast<size_t>((i * n + j) * types + t)];
  }
  double& at(int64_t i, int64_t j, int64_t t) {
    return p[static_cast<size_t>((i * n + j) * types + t)];
  }
};

// Copies one sentence's valid region out of a batched [B,n,n,T] tensor.
template <class Real>
ProbGrid probs_to_grid(const Tensor<Real>& probs, int64_t batch_index, int64_t len) {
  const int64_t n = probs.dim(1), t = probs.dim(3);
  ProbGrid g = ProbGrid::zeros(len, t);
  for (int64_t i = 0; i < len; ++i)
    for (int64_t j = 0; j < len; ++j)
      for (int64_t c = 0; c < t; ++c)
        g.at(i, j, c) = static_cast<double>(
            probs.data()[((batch_index * n + i) * n + j) * t + c]);
  return g;
}

struct CandidateSpan {
  int64_t start = 0;
  int64_t end = 0;             // inclusive
  std::vector<double> scores;  // per type, mirrored-average
  double max_score = 0.0;
};

struct TypeScore {
  int64_t type = 0;
  double score = 0.0;
};

struct DecodedEntity {
  int64_t start = 0;
  int64_t end = 0;
  std::vector<TypeScore> types;  // nonempty; every score above the threshold
};

// All (start, end) pairs with start <= end: n(n+1)/2 of them.
std::vector<std::pair<int64_t, int64_t>> enumerate_spans(int64_t n);

// P_hat[i,j] = (P[i,j] + P[j,i]) / 2; returned grid is symmetric.
ProbGrid symmetrize(const ProbGrid& p);

// Drops spans whose best score is not above the threshold, then orders by
// score descending with (start, end) ascending as the tie rule.
std::vector<CandidateSpan> prune_and_rank(const ProbGrid& symmetric, double threshold);

// True iff the spans partially overlap (nesting and identity are fine).
bool spans_cross(int64_t s1, int64_t e1, int64_t s2, int64_t e2);

// Accepts spans in rank order unless they cross an accepted span. Each
// accepted span carries all types above the threshold, or only the best one
// when multi_label is false.
std::vector<DecodedEntity> greedy_select(const std::vector<CandidateSpan>& ranked,
                                         double threshold, bool multi_label = true);

// symmetrize -> prune_and_rank -> greedy_select.
std::vector<DecodedEntity> decode(const ProbGrid& p, double threshold = 0.5,
                                  bool multi_label = true);

}  // namespace nner
