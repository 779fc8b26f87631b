#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "seqadv/core/graph.hpp"

namespace seqadv {

/// Builds a scalar loss on a fresh graph from the given parameters.
using LossBuilder = std::function<NodeId(Graph&, const ParameterStore&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  /// Below this magnitude the absolute error is used instead of the relative one.
  double absolute_floor = 1e-8;
};

struct CoordinateCheck {
  std::string name;
  std::size_t index;
  double analytic;
  double numeric;
  double error;
};

struct GradCheckReport {
  std::vector<CoordinateCheck> coordinates;
  std::vector<CoordinateCheck> failures;
  double max_error = 0.0;
  bool passed = true;
};

inline double gradient_error(double analytic, double numeric, double floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  const double diff = std::abs(analytic - numeric);
  return scale < floor ? diff : diff / scale;
}

/// Compares reverse-mode gradients against central differences for every
/// scalar of every parameter.
inline GradCheckReport grad_check(const LossBuilder& f, const ParameterStore& params,
                                  GradCheckOptions opt = {}) {
  Graph g;
  NodeId loss = f(g, params);
  g.backward(loss);
  const Gradients analytic = g.gradients_for(params);

  auto evaluate = [&f](const ParameterStore& p) {
    Graph gg;
    return gg.value(f(gg, p))[0];
  };

  GradCheckReport report;
  ParameterStore probe = params;
  for (const auto& [name, tensor] : params) {
    Tensor& slot = probe.at(name);
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double orig = slot[i];
      slot[i] = orig + opt.step;
      const double up = evaluate(probe);
      slot[i] = orig - opt.step;
      const double down = evaluate(probe);
      slot[i] = orig;
      const double numeric = (up - down) / (2.0 * opt.step);
      const double a = analytic.at(name)[i];
      CoordinateCheck c{name, i, a, numeric, gradient_error(a, numeric, opt.absolute_floor)};
      report.max_error = std::max(report.max_error, c.error);
      if (!(c.error < opt.tolerance)) report.failures.push_back(c);
      report.coordinates.push_back(std::move(c));
    }
  }
  report.passed = report.failures.empty();
  return report;
}

}  // namespace seqadv
