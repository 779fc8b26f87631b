#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/core/ops.hpp"
#include "seqadv/core/rng.hpp"
#include "seqadv/seqnets/vocabulary.hpp"

namespace seqadv {

/// Names and sizes of one LSTM layer's tensors inside a ParameterStore.
/// Gate blocks along the 4H axis are ordered input, forget, output, candidate.
struct LstmLayer {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t hidden = 0;

  std::string wx() const { return prefix + ".Wx"; }
  std::string wh() const { return prefix + ".Wh"; }
  std::string bias() const { return prefix + ".b"; }
};

inline void add_lstm_parameters(ParameterStore& store, const LstmLayer& layer, Rng& rng) {
  const std::size_t H = layer.hidden, G = 4 * layer.hidden;
  const double sx = 1.0 / std::sqrt(static_cast<double>(layer.input_dim + H));
  Tensor wx = Tensor::matrix(layer.input_dim, G);
  for (double& v : wx.data()) v = rng.uniform(-sx, sx);
  Tensor wh = Tensor::matrix(H, G);
  for (double& v : wh.data()) v = rng.uniform(-sx, sx);
  Tensor b = Tensor::matrix(1, G);
  for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
  store.add(layer.wx(), std::move(wx));
  store.add(layer.wh(), std::move(wh));
  store.add(layer.bias(), std::move(b));
}

struct LstmBinding {
  NodeId wx, wh, bias;
  std::size_t input_dim;
  std::size_t hidden;
};

inline LstmBinding bind_lstm(Graph& g, const ParameterStore& store, const LstmLayer& layer) {
  LstmBinding b{g.parameter(store, layer.wx()), g.parameter(store, layer.wh()),
                g.parameter(store, layer.bias()), layer.input_dim, layer.hidden};
  if (g.value(b.wx).shape() != Shape{layer.input_dim, 4 * layer.hidden} ||
      g.value(b.wh).shape() != Shape{layer.hidden, 4 * layer.hidden} ||
      g.value(b.bias).size() != 4 * layer.hidden)
    throw std::invalid_argument("lstm '" + layer.prefix + "': stored shapes disagree with layer sizes");
  return b;
}

struct LstmState {
  NodeId h;
  NodeId c;
};

inline LstmState zero_state(Graph& g, std::size_t batch, std::size_t hidden) {
  NodeId z = g.constant(Tensor::matrix(batch, hidden));
  return {z, z};
}

/// One gated update:
///   i, f, o = sigmoid(.), candidate = tanh(.), c = f*c_prev + i*candidate,
///   h = o * tanh(c).
inline LstmState lstm_step(Graph& g, const LstmBinding& p, NodeId x, LstmState prev) {
  const Tensor& xv = g.value(x);
  if (xv.cols() != p.input_dim)
    throw std::invalid_argument("lstm_step: input width " + std::to_string(xv.cols()) +
                                " but layer expects " + std::to_string(p.input_dim));
  if (g.value(prev.h).cols() != p.hidden || g.value(prev.h).rows() != xv.rows())
    throw std::invalid_argument("lstm_step: state shape " + shape_string(g.value(prev.h).shape()) +
                                " does not match input " + shape_string(xv.shape()));
  const std::size_t H = p.hidden;
  NodeId z = ops::add_row(g, ops::add(g, ops::matmul(g, x, p.wx), ops::matmul(g, prev.h, p.wh)),
                          p.bias);
  NodeId i = ops::sigmoid(g, ops::slice_cols(g, z, 0, H));
  NodeId f = ops::sigmoid(g, ops::slice_cols(g, z, H, 2 * H));
  NodeId o = ops::sigmoid(g, ops::slice_cols(g, z, 2 * H, 3 * H));
  NodeId cand = ops::tanh(g, ops::slice_cols(g, z, 3 * H, 4 * H));
  NodeId c = ops::add(g, ops::mul(g, f, prev.c), ops::mul(g, i, cand));
  NodeId h = ops::mul(g, o, ops::tanh(g, c));
  return {h, c};
}

/// Time-major batch: steps[t] is [batch x width]; row b is meaningful only
/// for t < lengths[b]. Every length is at least 1.
struct StepInputs {
  std::vector<NodeId> steps;
  std::vector<std::size_t> lengths;

  std::size_t batch() const { return lengths.size(); }
  std::size_t max_length() const { return steps.size(); }

  /// Row mask of step t.
  std::vector<std::uint8_t> valid_rows(std::size_t t) const {
    std::vector<std::uint8_t> m(lengths.size());
    for (std::size_t b = 0; b < lengths.size(); ++b) m[b] = t < lengths[b];
    return m;
  }
  bool all_valid(std::size_t t) const {
    return std::all_of(lengths.begin(), lengths.end(), [t](std::size_t n) { return t < n; });
  }
};

inline void check_lengths(std::span<const std::size_t> lengths, std::size_t steps) {
  if (lengths.empty()) throw std::invalid_argument("empty batch");
  for (std::size_t n : lengths)
    if (n == 0) throw std::invalid_argument("empty sequence");
  if (*std::max_element(lengths.begin(), lengths.end()) != steps)
    throw std::invalid_argument("step count does not match the longest sequence");
}

/// One-hot rows of width `width` (M for victims, M+1 for the substitute).
inline StepInputs one_hot_steps(Graph& g, std::span<const Sequence> seqs, std::size_t width) {
  StepInputs in;
  std::size_t longest = 0;
  for (const Sequence& s : seqs) {
    if (s.empty()) throw std::invalid_argument("empty sequence");
    Vocabulary::check_range(s, width);
    in.lengths.push_back(s.size());
    longest = std::max(longest, s.size());
  }
  if (seqs.empty()) throw std::invalid_argument("empty batch");
  for (std::size_t t = 0; t < longest; ++t) {
    Tensor x = Tensor::matrix(seqs.size(), width);
    for (std::size_t b = 0; b < seqs.size(); ++b)
      if (t < seqs[b].size()) x(b, static_cast<std::size_t>(seqs[b][t])) = 1.0;
    in.steps.push_back(g.constant(std::move(x)));
  }
  return in;
}

/// Row b of output t is row b of steps[which[t][b]], gathering only the
/// distinct sources each output needs.
inline NodeId gather_step_rows(Graph& g, const std::vector<NodeId>& steps,
                               const std::vector<std::size_t>& which) {
  std::vector<NodeId> sources;
  std::map<std::size_t, std::size_t> slot;
  std::vector<std::size_t> local(which.size());
  for (std::size_t b = 0; b < which.size(); ++b) {
    auto [it, fresh] = slot.try_emplace(which[b], sources.size());
    if (fresh) sources.push_back(steps[which[b]]);
    local[b] = it->second;
  }
  if (sources.size() == 1) return sources[0];
  return ops::gather_rows(g, sources, local);
}

/// Reverses each row's valid prefix in time; padded positions are left as is.
inline StepInputs reverse_valid(Graph& g, const StepInputs& in) {
  StepInputs out{{}, in.lengths};
  for (std::size_t t = 0; t < in.max_length(); ++t) {
    std::vector<std::size_t> which(in.batch());
    for (std::size_t b = 0; b < in.batch(); ++b)
      which[b] = t < in.lengths[b] ? in.lengths[b] - 1 - t : t;
    out.steps.push_back(gather_step_rows(g, in.steps, which));
  }
  return out;
}

/// Forward LSTM from a zero state. Rows past their length carry their last
/// valid state unchanged.
inline std::vector<NodeId> run_lstm(Graph& g, const LstmBinding& p, const StepInputs& in) {
  check_lengths(in.lengths, in.max_length());
  std::vector<NodeId> hs;
  LstmState s = zero_state(g, in.batch(), p.hidden);
  for (std::size_t t = 0; t < in.max_length(); ++t) {
    LstmState next = lstm_step(g, p, in.steps[t], s);
    if (!in.all_valid(t)) {
      const auto m = in.valid_rows(t);
      next = {ops::select_rows(g, m, next.h, s.h), ops::select_rows(g, m, next.c, s.c)};
    }
    s = next;
    hs.push_back(s.h);
  }
  return hs;
}

enum class Direction { Forward, Bidirectional };

/// Hidden states aligned with the input positions. Bidirectional output at
/// step t is [forward state t ; backward state t], where the backward pass
/// reads x_T..x_1 with its own weights.
inline std::vector<NodeId> run_rnn(Graph& g, const ParameterStore& store, const std::string& prefix,
                                   std::size_t input_dim, std::size_t hidden, Direction dir,
                                   const StepInputs& in) {
  if (in.max_length() == 0) throw std::invalid_argument("run_rnn: empty sequence");
  const LstmBinding fwd = bind_lstm(g, store, {prefix + ".fwd", input_dim, hidden});
  std::vector<NodeId> hs = run_lstm(g, fwd, in);
  if (dir == Direction::Forward) return hs;

  const LstmBinding bwd = bind_lstm(g, store, {prefix + ".bwd", input_dim, hidden});
  const std::vector<NodeId> rev = run_lstm(g, bwd, reverse_valid(g, in));
  std::vector<NodeId> out;
  for (std::size_t t = 0; t < in.max_length(); ++t) {
    std::vector<std::size_t> which(in.batch());
    for (std::size_t b = 0; b < in.batch(); ++b)
      which[b] = t < in.lengths[b] ? in.lengths[b] - 1 - t : t;
    out.push_back(ops::concat_cols(g, {hs[t], gather_step_rows(g, rev, which)}));
  }
  return out;
}

}  // namespace seqadv
