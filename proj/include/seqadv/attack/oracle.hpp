#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "seqadv/seqnets/classifier.hpp"

namespace seqadv {

/// The only view of the victim available to the attack: whole sequence in,
/// 0 (benign) or 1 (malware) out.
class HardLabelOracle {
 public:
  virtual ~HardLabelOracle() = default;
  virtual int label(const Sequence& seq) = 0;

  virtual std::vector<int> labels(std::span<const Sequence> seqs) {
    std::vector<int> out;
    out.reserve(seqs.size());
    for (const Sequence& s : seqs) out.push_back(label(s));
    return out;
  }
};

inline constexpr double kDecisionThreshold = 0.5;

/// Hard label of a probability: malware iff p >= 0.5.
inline int hard_label(double p_malware) { return p_malware >= kDecisionThreshold ? 1 : 0; }

/// Thresholds a trained classifier. Holds it by reference; the caller keeps
/// the victim alive.
class VictimOracle final : public HardLabelOracle {
 public:
  explicit VictimOracle(const SequenceClassifier& victim) : victim_(victim) {}

  int label(const Sequence& seq) override { return hard_label(victim_.predict(seq)); }

  std::vector<int> labels(std::span<const Sequence> seqs) override {
    std::vector<int> out;
    out.reserve(seqs.size());
    for (double p : victim_.predict_all(seqs)) out.push_back(hard_label(p));
    return out;
  }

 private:
  const SequenceClassifier& victim_;
};

}  // namespace seqadv
