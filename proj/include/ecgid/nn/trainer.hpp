#pragma once

#include "ecgid/nn/sequential.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace ecgid::nn {

struct TrainConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 64;
  int max_epochs = 500;
  int patience = 20;
  std::uint64_t seed = 0;
  HeadSpec head;  // classifier head of the models trained with this config

  void validate() const;
};

struct Dataset {
  Tensor inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::vector<double> val_accuracy;
  int best_epoch = 0;  // 1-based
  int epochs_run = 0;
  bool stopped_early = false;
};

// Tracks the best validation loss; an epoch counts as an improvement only if
// it is strictly lower.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}
  // Returns true when `loss` is a new best.
  bool update(double loss);
  bool should_stop() const { return since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_; }

 private:
  int patience_;
  int epoch_ = 0;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_ = 0.0;
};

// Adam with bias correction, applied to the given parameters only.
class Adam {
 public:
  Adam(std::vector<ParamRef> params, const TrainConfig& cfg);
  void step();

 private:
  std::vector<ParamRef> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, b1_, b2_, eps_;
  long t_ = 0;
};

// Mean cross-entropy of softmax(logits) against labels, and its gradient
// with respect to the logits when `grad` is non-null.
double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad = nullptr);

struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};

EvalStats evaluate(const Sequential& model, const Dataset& data);
std::vector<int> predict(const Sequential& model, const Tensor& inputs);

// Mini-batch training of the trainable layers with early stopping on the
// validation loss; the best epoch's parameters are restored at the end.
// Throws std::runtime_error on a non-finite loss.
TrainHistory train(Sequential& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg);

}  // namespace ecgid::nn
