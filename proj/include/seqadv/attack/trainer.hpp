#pragma once

#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqadv/attack/generator.hpp"
#include "seqadv/attack/losses.hpp"
#include "seqadv/attack/oracle.hpp"
#include "seqadv/core/adam.hpp"

namespace seqadv {

struct AttackTrainOptions {
  GumbelConfig gumbel;
  std::size_t epochs = 100;
  std::size_t patience = 10;
  std::size_t batch_size = 16;
  double generator_lr = 0.001;
  double substitute_lr = 0.001;
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
};

struct AttackData {
  std::span<const Sequence> malware;
  std::span<const Sequence> benign;
  std::span<const Sequence> validation_malware;
};

struct AttackEpoch {
  std::size_t epoch = 0;
  double substitute_loss = 0.0;
  double generator_loss = 0.0;
  double validation_success = 0.0;  // fraction of validation malware labelled benign
};

struct AttackTrainResult {
  std::vector<AttackEpoch> log;
  std::size_t best_epoch = 0;
  double best_success = -1.0;
};

/// Fraction of samples whose victim label is benign.
inline double attack_success(std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("attack_success: no labels");
  std::size_t benign = 0;
  for (int v : labels) benign += v == 0;
  return static_cast<double>(benign) / static_cast<double>(labels.size());
}

inline std::vector<Sequence> adversarial_sequences(const std::vector<AttackSample>& samples) {
  std::vector<Sequence> out;
  out.reserve(samples.size());
  for (const AttackSample& s : samples) out.push_back(s.adversarial);
  return out;
}

/// Queries the victim on every sample and records the labels.
inline void label_samples(HardLabelOracle& victim, std::vector<AttackSample>& samples) {
  const auto v = victim.labels(adversarial_sequences(samples));
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].victim_label = v[i];
}

/// Evaluation noise stream used for validation during training.
inline constexpr std::uint64_t kValidationStream = 0x76616c;

/// One substitute update and one generator update per minibatch.
struct AttackStep {
  double substitute_loss;
  double generator_loss;
};

inline AttackStep attack_step(Generator& gen, SequenceClassifier& sub, HardLabelOracle& victim,
                              const GumbelConfig& cfg, std::span<const Sequence> malware,
                              std::span<const NoiseTable> noise, std::span<const Sequence> benign,
                              Adam& gen_adam, Adam& sub_adam, double clip_norm) {
  if (malware.empty() || benign.empty())
    throw std::invalid_argument("attack_step: minibatch needs malware and benign examples");
  Graph g;
  GeneratedBatch gb = generate_batch(g, gen, gen.params(), cfg, malware, noise);
  NodeId mal_probs = sub.probabilities(g, gb.soft);
  NodeId ben_probs = sub.probabilities(g, one_hot_steps(g, benign, gen.extended_size()));

  std::vector<int> v_mal, v_ben;
  try {
    v_mal = victim.labels(adversarial_sequences(gb.samples));
    v_ben = victim.labels(benign);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("victim query failed: ") + e.what());
  }
  if (v_mal.size() != malware.size() || v_ben.size() != benign.size())
    throw std::runtime_error("victim query failed: wrong number of labels");

  const std::vector<double> y_mal(v_mal.begin(), v_mal.end());
  const std::vector<double> y_ben(v_ben.begin(), v_ben.end());
  NodeId ls = substitute_loss(g, ben_probs, y_ben, mal_probs, y_mal);
  NodeId lg = generator_loss(g, mal_probs, gb.null_mean, cfg.gamma);

  g.backward(ls);
  Gradients sub_grads = g.gradients_for(sub.params());
  g.backward(lg);
  Gradients gen_grads = g.gradients_for(gen.params());
  clip_global_norm(sub_grads, clip_norm);
  clip_global_norm(gen_grads, clip_norm);
  sub_adam.step(sub.params(), sub_grads);
  gen_adam.step(gen.params(), gen_grads);
  return {g.value(ls)[0], g.value(lg)[0]};
}

/// Alternating training. Each minibatch pairs malware with benign examples;
/// the substitute fits the victim's labels on benign sequences and on the
/// relaxed adversarial malware, then the generator minimizes the substitute's
/// malware probability. After every epoch the validation malware is attacked
/// with fixed noise; the best generator and substitute are kept and training
/// stops once success has not improved for `patience` epochs.
inline AttackTrainResult train_attack(Generator& gen, SequenceClassifier& sub,
                                      HardLabelOracle& victim, const AttackData& data,
                                      const AttackTrainOptions& opt,
                                      const std::function<void(const AttackEpoch&)>& on_epoch = {}) {
  opt.gumbel.validate();
  if (data.malware.empty() || data.benign.empty() || data.validation_malware.empty())
    throw std::invalid_argument("train_attack: needs malware, benign and validation malware");
  if (sub.config().input_dim != gen.extended_size())
    throw std::invalid_argument("train_attack: substitute input width must be M+1");

  Adam gen_adam({.lr = opt.generator_lr});
  Adam sub_adam({.lr = opt.substitute_lr});
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);
  std::vector<std::size_t> val_ids(data.validation_malware.size());
  std::iota(val_ids.begin(), val_ids.end(), 0);

  AttackTrainResult result;
  ParameterStore best_gen = gen.params(), best_sub = sub.params();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::vector<std::size_t> mal(data.malware.size()), ben(data.benign.size());
    std::iota(mal.begin(), mal.end(), 0);
    std::iota(ben.begin(), ben.end(), 0);
    Rng::stream(opt.seed, {1, epoch}).shuffle(mal);
    Rng::stream(opt.seed, {2, epoch}).shuffle(ben);

    AttackEpoch row{epoch};
    std::size_t batches = 0;
    for (std::size_t start = 0; start < mal.size(); start += bs) {
      std::vector<Sequence> mseq, bseq;
      std::vector<NoiseTable> noise;
      for (std::size_t k = start; k < std::min(mal.size(), start + bs); ++k) {
        mseq.push_back(data.malware[mal[k]]);
        Rng rng = Rng::stream(opt.seed, {3, epoch, mal[k]});
        noise.push_back(
            draw_noise(mseq.back().size(), opt.gumbel.insert_len, gen.extended_size(), rng));
      }
      for (std::size_t k = 0; k < mseq.size(); ++k)
        bseq.push_back(data.benign[ben[(start + k) % ben.size()]]);
      AttackStep step;
      try {
        step = attack_step(gen, sub, victim, opt.gumbel, mseq, noise, bseq, gen_adam, sub_adam,
                           opt.clip_norm);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("attack epoch " + std::to_string(epoch) + " aborted: " + e.what());
      }
      row.substitute_loss += step.substitute_loss;
      row.generator_loss += step.generator_loss;
      ++batches;
    }
    row.substitute_loss /= static_cast<double>(batches);
    row.generator_loss /= static_cast<double>(batches);

    auto samples = generate(gen, opt.gumbel, data.validation_malware, val_ids,
                            derive_seed(opt.seed, {kValidationStream}));
    label_samples(victim, samples);
    std::vector<int> labels;
    for (const auto& s : samples) labels.push_back(s.victim_label);
    row.validation_success = attack_success(labels);
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    if (row.validation_success > result.best_success) {
      result.best_success = row.validation_success;
      result.best_epoch = epoch;
      best_gen = gen.params();
      best_sub = sub.params();
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  gen.set_params(std::move(best_gen));
  sub.set_params(std::move(best_sub));
  return result;
}

}  // namespace seqadv
