#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "seqadv/core/tensor.hpp"

namespace seqadv {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction. Moment accumulators are created lazily with
/// zeros for each parameter name on its first step.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(ParameterStore& params, const Gradients& grads) {
    for (const auto& [name, _] : params)
      if (!grads.count(name)) throw std::invalid_argument("adam: missing gradient for '" + name + "'");
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : params) {
      const Tensor& g = grads.at(name);
      if (g.size() != p.size())
        throw std::invalid_argument("adam: gradient for '" + name + "' has shape " +
                                    shape_string(g.shape()) + ", parameter " +
                                    shape_string(p.shape()));
      auto [mit, fresh_m] = m_.try_emplace(name, p.shape(), 0.0);
      auto [vit, fresh_v] = v_.try_emplace(name, p.shape(), 0.0);
      Tensor& m = mit->second;
      Tensor& v = vit->second;
      for (std::size_t i = 0; i < p.size(); ++i) {
        m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
        v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        p[i] -= config_.lr * mhat / (std::sqrt(vhat) + config_.epsilon);
      }
    }
  }

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  const Tensor& first_moment(const std::string& name) const { return m_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return v_.at(name); }

 private:
  AdamConfig config_;
  std::uint64_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

/// Rescales all gradients so their joint L2 norm is at most max_norm.
/// Returns the norm before clipping. max_norm <= 0 disables clipping.
inline double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (auto& [_, g] : grads)
      for (double& v : g.data()) v *= s;
  }
  return norm;
}

}  // namespace seqadv
