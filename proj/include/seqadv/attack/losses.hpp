#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>

#include "seqadv/seqnets/training.hpp"

namespace seqadv {

inline double clamp_probability(double p) {
  return std::clamp(p, kProbabilityFloor, 1.0 - kProbabilityFloor);
}

/// Cross-entropy of the substitute's malware probability against the
/// victim's hard label.
inline double substitute_loss(double p_s, int v) {
  const double p = clamp_probability(p_s);
  return v ? -std::log(p) : -std::log(1.0 - p);
}

/// log p_S minus gamma times the mean null probability over all proposals.
inline double generator_loss(double p_s, std::span<const double> null_probs, double gamma) {
  if (null_probs.empty()) throw std::invalid_argument("generator_loss: no proposals");
  double mean = 0.0;
  for (double q : null_probs) mean += q;
  mean /= static_cast<double>(null_probs.size());
  return std::log(clamp_probability(p_s)) - gamma * mean;
}

/// Mean substitute loss over benign and malware rows together.
inline NodeId substitute_loss(Graph& g, NodeId benign_probs, std::span<const double> benign_labels,
                              NodeId malware_probs, std::span<const double> malware_labels) {
  const double nb = static_cast<double>(benign_labels.size());
  const double nm = static_cast<double>(malware_labels.size());
  return ops::add(g, ops::scale(g, binary_cross_entropy(g, benign_probs, benign_labels), nb / (nb + nm)),
                  ops::scale(g, binary_cross_entropy(g, malware_probs, malware_labels), nm / (nb + nm)));
}

/// Mean generator loss over malware rows; `null_mean` is [batch x 1].
inline NodeId generator_loss(Graph& g, NodeId malware_probs, NodeId null_mean, double gamma) {
  NodeId p = ops::clamp(g, ops::slice_cols(g, malware_probs, 1, 2), kProbabilityFloor,
                        1.0 - kProbabilityFloor);
  return ops::mean(g, ops::sub(g, ops::log(g, p), ops::scale(g, null_mean, gamma)));
}

}  // namespace seqadv
