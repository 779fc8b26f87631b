#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "seqadv/seqnets/lstm.hpp"

namespace seqadv {

enum class Head { LastState, Average, Attention };

struct VictimConfig {
  Direction direction = Direction::Forward;
  Head head = Head::LastState;
  std::size_t hidden = 128;
  std::size_t attention_hidden = 128;
  std::size_t input_dim = 0;

  /// Width of the per-step representation fed to pooling.
  std::size_t state_width() const {
    return direction == Direction::Bidirectional ? 2 * hidden : hidden;
  }
  friend bool operator==(const VictimConfig&, const VictimConfig&) = default;
};

inline constexpr std::array<std::string_view, 6> kVictimNames = {
    "LSTM", "BiLSTM", "LSTM-Average", "BiLSTM-Average", "LSTM-Attention", "BiLSTM-Attention"};

inline std::string victim_name(Direction dir, Head head) {
  std::string name = dir == Direction::Bidirectional ? "BiLSTM" : "LSTM";
  if (head == Head::Average) name += "-Average";
  if (head == Head::Attention) name += "-Attention";
  return name;
}

inline std::optional<std::pair<Direction, Head>> parse_victim_name(std::string_view name) {
  for (Direction d : {Direction::Forward, Direction::Bidirectional})
    for (Head h : {Head::LastState, Head::Average, Head::Attention})
      if (victim_name(d, h) == name) return std::pair{d, h};
  return std::nullopt;
}

/// Scalar attention score per row: A(h) = w2 . tanh(W1 h + b1) + b2.
inline NodeId attention_scores(Graph& g, const ParameterStore& store, const std::string& prefix,
                               NodeId states) {
  NodeId hidden = ops::tanh(
      g, ops::add_row(g, ops::matmul(g, states, g.parameter(store, prefix + ".attn.W1")),
                      g.parameter(store, prefix + ".attn.b1")));
  return ops::add_row(g, ops::matmul(g, hidden, g.parameter(store, prefix + ".attn.w2")),
                      g.parameter(store, prefix + ".attn.b2"));
}

/// Attention weights over time, [batch x T]; padded steps get weight 0.
inline NodeId attention_weights(Graph& g, const ParameterStore& store, const std::string& prefix,
                                const std::vector<NodeId>& states,
                                std::span<const std::size_t> lengths) {
  std::vector<NodeId> scores;
  for (NodeId h : states) scores.push_back(attention_scores(g, store, prefix, h));
  NodeId all = scores.size() == 1 ? scores[0] : ops::concat_cols(g, scores);
  const std::size_t T = states.size();
  std::vector<std::uint8_t> keep(lengths.size() * T);
  for (std::size_t b = 0; b < lengths.size(); ++b)
    for (std::size_t t = 0; t < T; ++t) keep[b * T + t] = t < lengths[b];
  return ops::masked_softmax(g, all, std::move(keep));
}

/// Reduces per-step states to one representation per row.
inline NodeId pool(Graph& g, const std::vector<NodeId>& states,
                   std::span<const std::size_t> lengths, Head head,
                   const ParameterStore* attn_store = nullptr,
                   const std::string& attn_prefix = {}) {
  if (states.empty()) throw std::invalid_argument("pool: no states");
  const std::size_t B = lengths.size();
  auto valid_rows = [&](std::size_t t) {
    std::vector<std::uint8_t> m(B);
    bool all = true;
    for (std::size_t b = 0; b < B; ++b) {
      m[b] = t < lengths[b];
      all = all && m[b];
    }
    return std::pair{m, all};
  };

  switch (head) {
    case Head::LastState: {
      std::vector<std::size_t> which(B);
      for (std::size_t b = 0; b < B; ++b) which[b] = lengths[b] - 1;
      return gather_step_rows(g, states, which);
    }
    case Head::Average: {
      NodeId acc = states[0];
      for (std::size_t t = 1; t < states.size(); ++t) {
        auto [m, all] = valid_rows(t);
        NodeId next = ops::add(g, acc, states[t]);
        acc = all ? next : ops::select_rows(g, m, next, acc);
      }
      Tensor inv = Tensor::matrix(B, 1);
      for (std::size_t b = 0; b < B; ++b) inv[b] = 1.0 / static_cast<double>(lengths[b]);
      return ops::scale_rows(g, acc, g.constant(std::move(inv)));
    }
    case Head::Attention: {
      if (!attn_store) throw std::invalid_argument("pool: attention head needs attention parameters");
      NodeId alpha = attention_weights(g, *attn_store, attn_prefix, states, lengths);
      NodeId acc{};
      for (std::size_t t = 0; t < states.size(); ++t) {
        NodeId term = ops::scale_rows(g, states[t], ops::slice_cols(g, alpha, t, t + 1));
        if (t == 0) {
          acc = term;
          continue;
        }
        auto [m, all] = valid_rows(t);
        NodeId next = ops::add(g, acc, term);
        acc = all ? next : ops::select_rows(g, m, next, acc);
      }
      return acc;
    }
  }
  throw std::logic_error("pool: unknown head");
}

/// Final state of each direction: forward at the last valid step, backward at
/// step 0, where it has read the whole sequence.
inline NodeId bidirectional_last_state(Graph& g, const std::vector<NodeId>& states,
                                       std::span<const std::size_t> lengths,
                                       std::size_t hidden) {
  NodeId last = pool(g, states, lengths, Head::LastState);
  return ops::concat_cols(g, {ops::slice_cols(g, last, 0, hidden),
                              ops::slice_cols(g, states[0], hidden, 2 * hidden)});
}

/// Affine map to two logits followed by softmax; column 1 is p(malware).
inline NodeId classify(Graph& g, const ParameterStore& store, const std::string& prefix,
                       NodeId representation) {
  NodeId logits = ops::add_row(
      g, ops::matmul(g, representation, g.parameter(store, prefix + ".out.W")),
      g.parameter(store, prefix + ".out.b"));
  return ops::softmax(g, logits);
}

/// LSTM encoder, pooling head and two-class output with all parameters under
/// one name prefix. Used for the victims and, with input width M+1, for the
/// substitute.
class SequenceClassifier {
 public:
  SequenceClassifier(VictimConfig config, std::string prefix)
      : config_(config), prefix_(std::move(prefix)) {
    if (config_.input_dim == 0 || config_.hidden == 0)
      throw std::invalid_argument("classifier: zero input or hidden size");
  }

  /// Fresh random parameters; deterministic per seed.
  void initialize(std::uint64_t seed) {
    params_ = ParameterStore{};
    Rng rng(seed);
    add_lstm_parameters(params_, {prefix_ + ".fwd", config_.input_dim, config_.hidden}, rng);
    if (config_.direction == Direction::Bidirectional)
      add_lstm_parameters(params_, {prefix_ + ".bwd", config_.input_dim, config_.hidden}, rng);
    const std::size_t W = config_.state_width();
    if (config_.head == Head::Attention) {
      const std::size_t A = config_.attention_hidden;
      params_.add(prefix_ + ".attn.W1", random_matrix(W, A, rng));
      params_.add(prefix_ + ".attn.b1", Tensor::matrix(1, A));
      params_.add(prefix_ + ".attn.w2", random_matrix(A, 1, rng));
      params_.add(prefix_ + ".attn.b2", Tensor::matrix(1, 1));
    }
    params_.add(prefix_ + ".out.W", random_matrix(W, 2, rng));
    params_.add(prefix_ + ".out.b", Tensor::matrix(1, 2));
  }

  const VictimConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }
  void set_params(ParameterStore p) { params_ = std::move(p); }

  /// [batch x 2] class probabilities.
  NodeId probabilities(Graph& g, const StepInputs& in) const {
    return probabilities(g, params_, in);
  }

  NodeId probabilities(Graph& g, const ParameterStore& params, const StepInputs& in) const {
    for (NodeId s : in.steps)
      if (g.value(s).cols() != config_.input_dim)
        throw std::invalid_argument("classifier '" + prefix_ + "': input width " +
                                    std::to_string(g.value(s).cols()) + ", expected " +
                                    std::to_string(config_.input_dim));
    std::vector<NodeId> states = run_rnn(g, params, prefix_, config_.input_dim, config_.hidden,
                                         config_.direction, in);
    NodeId rep = config_.direction == Direction::Bidirectional && config_.head == Head::LastState
                     ? bidirectional_last_state(g, states, in.lengths, config_.hidden)
                     : pool(g, states, in.lengths, config_.head, &params, prefix_);
    return classify(g, params, prefix_, rep);
  }

  /// p(malware) for each index sequence, evaluated as one masked batch.
  std::vector<double> predict(std::span<const Sequence> seqs) const {
    Graph g(false);
    NodeId probs = probabilities(g, one_hot_steps(g, seqs, config_.input_dim));
    std::vector<double> out(seqs.size());
    for (std::size_t b = 0; b < seqs.size(); ++b) out[b] = g.value(probs)(b, 1);
    return out;
  }

  double predict(const Sequence& seq) const {
    return predict(std::span<const Sequence>(&seq, 1))[0];
  }

  /// Batched prediction in chunks of `batch` sequences.
  std::vector<double> predict_all(std::span<const Sequence> seqs, std::size_t batch = 32) const {
    std::vector<double> out;
    out.reserve(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); i += batch) {
      auto part = predict(seqs.subspan(i, std::min(batch, seqs.size() - i)));
      out.insert(out.end(), part.begin(), part.end());
    }
    return out;
  }

 private:
  static Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::matrix(rows, cols);
    for (double& v : t.data()) v = rng.uniform(-s, s);
    return t;
  }

  VictimConfig config_;
  std::string prefix_;
  ParameterStore params_;
};

/// Sets every tensor of the store to zero.
inline void zero_parameters(ParameterStore& store) {
  for (auto& [_, t] : store)
    for (double& v : t.data()) v = 0.0;
}

}  // namespace seqadv
