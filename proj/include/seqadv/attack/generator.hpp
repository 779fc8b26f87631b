#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/attack/gumbel.hpp"
#include "seqadv/seqnets/classifier.hpp"
#include "seqadv/seqnets/vocabulary.hpp"

namespace seqadv {

struct GeneratorConfig {
  std::size_t vocab_size = 0;  // M; the null symbol is index M
  std::size_t hidden = 32;
  friend bool operator==(const GeneratorConfig&, const GeneratorConfig&) = default;
};

/// Encoder LSTM over the original one-hots, and a decoder LSTM that proposes
/// L symbols (or null) after every original symbol.
///   enc: M -> H, dec: H -> H, Ws: H -> M+1 (with bias bs), Wg: M+1 -> H.
class Generator {
 public:
  explicit Generator(GeneratorConfig config, std::string prefix = "gen")
      : config_(config), prefix_(std::move(prefix)) {
    if (config_.vocab_size < 2 || config_.hidden == 0)
      throw std::invalid_argument("generator: needs vocab >= 2 and hidden > 0");
  }

  void initialize(std::uint64_t seed) {
    params_ = ParameterStore{};
    Rng rng(seed);
    const std::size_t H = config_.hidden, K = extended_size();
    add_lstm_parameters(params_, encoder(), rng);
    add_lstm_parameters(params_, decoder(), rng);
    params_.add(prefix_ + ".Ws", random_matrix(H, K, rng));
    params_.add(prefix_ + ".bs", Tensor::matrix(1, K));
    params_.add(prefix_ + ".Wg", random_matrix(K, H, rng));
  }

  LstmLayer encoder() const { return {prefix_ + ".enc", config_.vocab_size, config_.hidden}; }
  LstmLayer decoder() const { return {prefix_ + ".dec", config_.hidden, config_.hidden}; }
  std::size_t null_index() const { return config_.vocab_size; }
  std::size_t extended_size() const { return config_.vocab_size + 1; }

  const GeneratorConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& params() { return params_; }
  void set_params(ParameterStore p) { params_ = std::move(p); }

 private:
  static Tensor random_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
    const double s = 1.0 / std::sqrt(static_cast<double>(rows));
    Tensor t = Tensor::matrix(rows, cols);
    for (double& v : t.data()) v = rng.uniform(-s, s);
    return t;
  }

  GeneratorConfig config_;
  std::string prefix_;
  ParameterStore params_;
};

/// Gumbel noise for one sequence of length T: row t*L + tau holds M+1
/// variates for proposal (t, tau).
using NoiseTable = std::vector<std::vector<double>>;

inline NoiseTable draw_noise(std::size_t length, std::size_t insert_len, std::size_t width,
                             Rng& rng) {
  NoiseTable z(length * insert_len);
  for (auto& row : z) row = sample_gumbel_noise(width, rng);
  return z;
}

/// Hard outcome for one sequence. `adversarial` is the original with every
/// non-null proposal inserted after its source symbol.
struct AttackSample {
  Sequence original;
  Sequence adversarial;
  std::vector<std::size_t> inserted;  // positions in `adversarial` holding inserted symbols
  std::size_t proposals = 0;          // T * L
  std::size_t nulls = 0;
  int victim_label = -1;  // filled once the victim is queried
  double substitute_p = std::numeric_limits<double>::quiet_NaN();
};

/// True iff `original` is an ordered subsequence of `adversarial`.
inline bool is_subsequence(const Sequence& original, const Sequence& adversarial) {
  std::size_t i = 0;
  for (std::size_t j = 0; j < adversarial.size() && i < original.size(); ++j)
    if (adversarial[j] == original[i]) ++i;
  return i == original.size();
}

/// Removing the inserted positions gives back the original exactly.
inline bool insertion_only(const AttackSample& s) {
  if (s.adversarial.size() != s.original.size() + s.inserted.size()) return false;
  Sequence kept;
  std::size_t k = 0;
  for (std::size_t j = 0; j < s.adversarial.size(); ++j) {
    if (k < s.inserted.size() && s.inserted[k] == j) {
      ++k;
      continue;
    }
    kept.push_back(s.adversarial[j]);
  }
  return k == s.inserted.size() && kept == s.original;
}

struct GeneratedBatch {
  StepInputs soft;                 // relaxed sequence, width M+1, length T(1+L) per row
  std::vector<NodeId> pi;          // proposal distributions, index t*L + tau, [batch x M+1]
  NodeId null_mean{};              // [batch x 1] mean null probability over valid proposals
  std::vector<AttackSample> samples;
};

/// Runs the generator over a masked batch. Per position t the decoder starts
/// from a zero state with the encoder state h_t as input; later proposals feed
/// back Wg times the previous relaxed sample. The relaxed sequence interleaves
/// each original one-hot (null coordinate zero) with its L relaxed proposals.
inline GeneratedBatch generate_batch(Graph& g, const Generator& gen, const ParameterStore& params,
                                     const GumbelConfig& cfg, std::span<const Sequence> seqs,
                                     std::span<const NoiseTable> noise) {
  cfg.validate();
  if (seqs.empty()) throw std::invalid_argument("generate: empty batch");
  if (noise.size() != seqs.size()) throw std::invalid_argument("generate: one noise table per sequence");
  const std::size_t M = gen.config().vocab_size, K = M + 1, H = gen.config().hidden;
  const std::size_t L = cfg.insert_len, B = seqs.size();
  for (std::size_t b = 0; b < B; ++b) {
    Vocabulary::check_range(seqs[b], M);
    if (noise[b].size() != seqs[b].size() * L)
      throw std::invalid_argument("generate: noise table has " + std::to_string(noise[b].size()) +
                                  " rows, expected " + std::to_string(seqs[b].size() * L));
    for (const auto& row : noise[b])
      if (row.size() != K) throw std::invalid_argument("generate: noise width must be M+1");
  }

  StepInputs in = one_hot_steps(g, seqs, M);
  StepInputs padded = one_hot_steps(g, seqs, K);
  std::vector<NodeId> enc = run_lstm(g, bind_lstm(g, params, gen.encoder()), in);
  LstmBinding dec = bind_lstm(g, params, gen.decoder());
  NodeId Ws = g.parameter(params, gen.prefix() + ".Ws");
  NodeId bs = g.parameter(params, gen.prefix() + ".bs");
  NodeId Wg = g.parameter(params, gen.prefix() + ".Wg");

  GeneratedBatch out;
  for (std::size_t b = 0; b < B; ++b) {
    out.samples.push_back({seqs[b], {}, {}, seqs[b].size() * L, 0});
    out.soft.lengths.push_back(seqs[b].size() * (1 + L));
  }
  NodeId null_sum{};
  for (std::size_t t = 0; t < in.max_length(); ++t) {
    const auto valid = in.valid_rows(t);
    out.soft.steps.push_back(padded.steps[t]);
    for (std::size_t b = 0; b < B; ++b)
      if (valid[b]) out.samples[b].adversarial.push_back(seqs[b][t]);

    LstmState state = zero_state(g, B, H);
    NodeId input = enc[t];
    for (std::size_t tau = 0; tau < L; ++tau) {
      state = lstm_step(g, dec, input, state);
      NodeId pi = ops::softmax(g, ops::add_row(g, ops::matmul(g, state.h, Ws), bs));
      Tensor z = Tensor::matrix(B, K);
      for (std::size_t b = 0; b < B; ++b)
        if (valid[b]) std::copy(noise[b][t * L + tau].begin(), noise[b][t * L + tau].end(), &z(b, 0));
      const Tensor pv = g.value(pi);
      NodeId relaxed = gumbel_softmax(g, pi, z, cfg.temp);
      out.soft.steps.push_back(relaxed);
      out.pi.push_back(pi);

      for (std::size_t b = 0; b < B; ++b) {
        if (!valid[b]) continue;
        AttackSample& s = out.samples[b];
        const std::size_t a = perturbed_argmax(pv.row(b), z.row(b));
        if (a == M) {
          ++s.nulls;
        } else {
          s.inserted.push_back(s.adversarial.size());
          s.adversarial.push_back(static_cast<int>(a));
        }
      }

      NodeId null_p = ops::slice_cols(g, pi, M, K);
      if (t == 0 && tau == 0) {
        null_sum = null_p;
      } else {
        NodeId next = ops::add(g, null_sum, null_p);
        null_sum = in.all_valid(t) ? next : ops::select_rows(g, valid, next, null_sum);
      }
      if (tau + 1 < L) input = ops::matmul(g, relaxed, Wg);
    }
  }
  Tensor inv = Tensor::matrix(B, 1);
  for (std::size_t b = 0; b < B; ++b) inv[b] = 1.0 / static_cast<double>(seqs[b].size() * L);
  out.null_mean = ops::scale_rows(g, null_sum, g.constant(std::move(inv)));
  return out;
}

/// The substitute: bidirectional LSTM with attention over width M+1 inputs.
inline SequenceClassifier make_substitute(std::size_t vocab_size, std::size_t hidden,
                                          std::size_t attention_hidden) {
  return SequenceClassifier(
      {Direction::Bidirectional, Head::Attention, hidden, attention_hidden, vocab_size + 1}, "sub");
}

/// Frozen-parameter generation for evaluation. Noise for example i comes from
/// the stream (seed, ids[i]), so results do not depend on batching. When a
/// substitute is given, its malware probability on the relaxed sequence is
/// recorded.
inline std::vector<AttackSample> generate(const Generator& gen, const GumbelConfig& cfg,
                                          std::span<const Sequence> seqs,
                                          std::span<const std::size_t> ids, std::uint64_t seed,
                                          const SequenceClassifier* substitute = nullptr,
                                          std::size_t batch = 32) {
  if (ids.size() != seqs.size()) throw std::invalid_argument("generate: one id per sequence");
  std::vector<AttackSample> out;
  out.reserve(seqs.size());
  for (std::size_t i = 0; i < seqs.size(); i += batch) {
    const auto part = seqs.subspan(i, std::min(batch, seqs.size() - i));
    std::vector<NoiseTable> noise;
    for (std::size_t k = 0; k < part.size(); ++k) {
      Rng rng = Rng::stream(seed, {ids[i + k]});
      noise.push_back(draw_noise(part[k].size(), cfg.insert_len, gen.extended_size(), rng));
    }
    Graph g(false);
    GeneratedBatch gb = generate_batch(g, gen, gen.params(), cfg, part, noise);
    if (substitute) {
      NodeId probs = substitute->probabilities(g, gb.soft);
      for (std::size_t b = 0; b < part.size(); ++b) gb.samples[b].substitute_p = g.value(probs)(b, 1);
    }
    for (auto& s : gb.samples) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seqadv
