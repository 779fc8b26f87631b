#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace seqadv {

struct Scored {
  int label;     // 0 benign, 1 malware
  double score;  // p(malware)
};

using ScoredSet = std::vector<Scored>;

inline ScoredSet make_scored(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size())
    throw std::invalid_argument("scored set: label and score counts differ");
  ScoredSet out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.push_back({labels[i], scores[i]});
  return out;
}

/// Rank-based (Mann-Whitney) area under the ROC curve; tied scores share
/// their average rank, so every tied malware/benign pair counts 1/2.
inline double auc(const ScoredSet& scored) {
  std::int64_t n1 = 0, n0 = 0;
  for (const Scored& s : scored) {
    if (s.label != 0 && s.label != 1)
      throw std::invalid_argument("auc: label " + std::to_string(s.label) + " is not 0/1");
    if (!std::isfinite(s.score)) throw std::invalid_argument("auc: non-finite score");
    (s.label ? n1 : n0) += 1;
  }
  if (n1 == 0 || n0 == 0) throw std::invalid_argument("auc: needs both classes");

  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scored[a].score < scored[b].score; });
  // Twice the positive rank sum stays integral under averaged ties.
  std::int64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scored[order[j]].score == scored[order[i]].score) ++j;
    const auto twice_avg_rank = static_cast<std::int64_t>(i + 1 + j);  // 2 * (i+1 + j)/2
    for (std::size_t k = i; k < j; ++k)
      if (scored[order[k]].label) twice_rank_sum += twice_avg_rank;
    i = j;
  }
  const std::int64_t twice_u = twice_rank_sum - n1 * (n1 + 1);
  return static_cast<double>(twice_u) / static_cast<double>(2 * n1 * n0);
}

/// Fraction of scores at or above the threshold.
inline double detection_rate(std::span<const double> scores, double threshold = 0.5) {
  if (scores.empty()) throw std::invalid_argument("detection_rate: empty set");
  std::size_t hit = 0;
  for (double s : scores) hit += s >= threshold;
  return static_cast<double>(hit) / static_cast<double>(scores.size());
}

}  // namespace seqadv
