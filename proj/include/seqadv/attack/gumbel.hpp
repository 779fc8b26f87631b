#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/core/ops.hpp"
#include "seqadv/core/rng.hpp"

namespace seqadv {

inline constexpr double kUniformClamp = 1e-12;
inline constexpr double kPiFloor = 1e-20;

struct GumbelConfig {
  double temp = 10.0;
  std::size_t insert_len = 1;  // L, symbols proposed after each original symbol
  double gamma = 0.01;         // weight of the null-probability reward

  void validate() const {
    if (!(temp > 0.0)) throw std::invalid_argument("gumbel: temperature must be positive");
    if (insert_len == 0) throw std::invalid_argument("gumbel: insert length must be at least 1");
    if (!(gamma >= 0.0)) throw std::invalid_argument("gumbel: gamma must be non-negative");
  }
  friend bool operator==(const GumbelConfig&, const GumbelConfig&) = default;
};

/// Standard Gumbel variate -log(-log u), u clamped to [1e-12, 1 - 1e-12].
inline double gumbel_from_uniform(double u) {
  u = std::clamp(u, kUniformClamp, 1.0 - kUniformClamp);
  return -std::log(-std::log(u));
}

inline std::vector<double> sample_gumbel_noise(std::size_t dim, Rng& rng) {
  std::vector<double> z(dim);
  for (double& v : z) v = gumbel_from_uniform(rng.uniform_open());
  return z;
}

/// softmax((log max(pi, 1e-20) + z) / temp), max-subtracted.
inline std::vector<double> gumbel_softmax(std::span<const double> pi, std::span<const double> z,
                                          double temp) {
  if (!(temp > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  if (pi.size() != z.size() || pi.empty())
    throw std::invalid_argument("gumbel_softmax: pi has " + std::to_string(pi.size()) +
                                " entries, noise has " + std::to_string(z.size()));
  std::vector<double> y(pi.size());
  for (std::size_t i = 0; i < y.size(); ++i)
    y[i] = (std::log(std::max(pi[i], kPiFloor)) + z[i]) / temp;
  const double m = *std::max_element(y.begin(), y.end());
  double sum = 0.0;
  for (double& v : y) sum += (v = std::exp(v - m));
  for (double& v : y) v /= sum;
  return y;
}

/// Categorical draw argmax(log pi + z); with the z given to gumbel_softmax it
/// agrees with the argmax of the relaxed sample.
inline std::size_t perturbed_argmax(std::span<const double> pi, std::span<const double> z) {
  std::size_t best = 0;
  double best_v = -INFINITY;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    const double v = std::log(std::max(pi[i], kPiFloor)) + z[i];
    if (v > best_v) {
      best_v = v;
      best = i;
    }
  }
  return best;
}

inline std::size_t sample_categorical(std::span<const double> pi, Rng& rng) {
  const auto z = sample_gumbel_noise(pi.size(), rng);
  return perturbed_argmax(pi, z);
}

/// Graph form over rows of `pi` ([batch x K]) with constant noise [batch x K].
inline NodeId gumbel_softmax(Graph& g, NodeId pi, Tensor noise, double temp) {
  if (!(temp > 0.0)) throw std::invalid_argument("gumbel_softmax: temperature must be positive");
  NodeId logits = ops::add(g, ops::log(g, ops::clamp(g, pi, kPiFloor, 1.0)),
                           g.constant(std::move(noise)));
  return ops::softmax(g, ops::scale(g, logits, 1.0 / temp));
}

}  // namespace seqadv
