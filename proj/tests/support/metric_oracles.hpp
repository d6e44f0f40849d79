#pragma once

#include <cstddef>

#include "cssl/metrics.hpp"
#include "cssl/rng.hpp"

namespace cssl::testing {

/// O(n^2) count over positive/negative pairs, ties worth one half.
inline double brute_force_auroc(const ScoredSet& s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.scores.size(); ++i) {
    if (s.labels[i] != 1) continue;
    for (std::size_t j = 0; j < s.scores.size(); ++j) {
      if (s.labels[j] != 0) continue;
      pairs += 1.0;
      if (s.scores[i] > s.scores[j]) wins += 1.0;
      else if (s.scores[i] == s.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

/// Random instance with both classes present. With `ties`, scores are drawn
/// from a small grid so equal scores are common.
inline ScoredSet random_scored_set(Rng& rng, std::size_t max_n, bool ties) {
  ScoredSet s;
  const std::size_t n = 2 + rng.below(max_n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    s.labels.push_back(i == 0 ? 0 : i == 1 ? 1 : static_cast<int>(rng.below(2)));
    s.scores.push_back(ties ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform());
  }
  rng.shuffle(s.labels);
  return s;
}

}  // namespace cssl::testing
