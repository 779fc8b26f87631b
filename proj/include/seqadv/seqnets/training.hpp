#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "seqadv/core/adam.hpp"
#include "seqadv/eval/metrics.hpp"
#include "seqadv/seqnets/classifier.hpp"

namespace seqadv {

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean binary cross-entropy of column 1 of `probs` ([batch x 2]) against
/// 0/1 targets, with p clamped to [1e-12, 1 - 1e-12].
inline NodeId binary_cross_entropy(Graph& g, NodeId probs, std::span<const double> targets) {
  const std::size_t B = g.value(probs).rows();
  if (targets.size() != B) throw std::invalid_argument("cross entropy: target count mismatch");
  NodeId p = ops::clamp(g, ops::slice_cols(g, probs, 1, 2), kProbabilityFloor,
                        1.0 - kProbabilityFloor);
  NodeId log_p = ops::log(g, p);
  NodeId log_q = ops::log(g, ops::add_scalar(g, ops::scale(g, p, -1.0), 1.0));
  Tensor y = Tensor::matrix(B, 1, std::vector<double>(targets.begin(), targets.end()));
  Tensor not_y = y;
  for (double& v : not_y.data()) v = 1.0 - v;
  NodeId per_row = ops::add(g, ops::mul(g, g.constant(std::move(y)), log_p),
                            ops::mul(g, g.constant(std::move(not_y)), log_q));
  return ops::scale(g, ops::mean(g, per_row), -1.0);
}

struct ClassifierTrainOptions {
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  double lr = 0.001;
  std::size_t patience = 5;
  double clip_norm = 0.0;
  std::uint64_t seed = 1;
};

struct ClassifierEpoch {
  std::size_t epoch;
  double train_loss;
  double validation_auc;
};

struct ClassifierTrainResult {
  std::vector<ClassifierEpoch> log;
  std::size_t best_epoch = 0;
  double best_validation_auc = -1.0;
};

/// Minibatch Adam on cross-entropy. After every epoch the validation AUC is
/// measured; the best parameters are kept and training stops once the AUC
/// has not improved for `patience` epochs.
inline ClassifierTrainResult train_classifier(SequenceClassifier& model,
                                              std::span<const Sequence> train,
                                              std::span<const int> train_labels,
                                              std::span<const Sequence> validation,
                                              std::span<const int> validation_labels,
                                              const ClassifierTrainOptions& opt) {
  if (train.empty() || train.size() != train_labels.size())
    throw std::invalid_argument("train_classifier: empty or mislabeled training set");
  Adam adam({.lr = opt.lr});
  ClassifierTrainResult result;
  ParameterStore best = model.params();
  std::size_t since_best = 0;
  const std::size_t bs = std::max<std::size_t>(1, opt.batch_size);

  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng::stream(opt.seed, {epoch});
    rng.shuffle(order);

    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<Sequence> seqs;
      std::vector<double> targets;
      for (std::size_t k = start; k < std::min(order.size(), start + bs); ++k) {
        seqs.push_back(train[order[k]]);
        targets.push_back(train_labels[order[k]]);
      }
      Graph g;
      NodeId probs = model.probabilities(g, one_hot_steps(g, seqs, model.config().input_dim));
      NodeId loss = binary_cross_entropy(g, probs, targets);
      g.backward(loss);
      Gradients grads = g.gradients_for(model.params());
      clip_global_norm(grads, opt.clip_norm);
      adam.step(model.params(), grads);
      loss_sum += g.value(loss)[0];
      ++batches;
    }

    const double val_auc =
        auc(make_scored(validation_labels, model.predict_all(validation)));
    result.log.push_back({epoch, loss_sum / static_cast<double>(batches), val_auc});
    if (val_auc > result.best_validation_auc) {
      result.best_validation_auc = val_auc;
      result.best_epoch = epoch;
      best = model.params();
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      break;
    }
  }
  model.set_params(std::move(best));
  return result;
}

}  // namespace seqadv
