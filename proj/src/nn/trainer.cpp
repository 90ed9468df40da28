#include "ecgid/nn/trainer.hpp"

#include "ecgid/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ecgid::nn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
    throw ConfigError("train.beta1 and train.beta2 must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be positive");
  if (batch_size < 1) throw ConfigError("train.batch_size must be positive");
  if (max_epochs < 1) throw ConfigError("train.max_epochs must be positive");
  if (patience < 1) throw ConfigError("train.patience must be positive");
  head.validate();
}

bool EarlyStopping::update(double loss) {
  ++epoch_;
  if (epoch_ == 1 || loss < best_) {
    best_ = loss;
    best_epoch_ = epoch_;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

Adam::Adam(std::vector<ParamRef> params, const TrainConfig& cfg)
    : params_(std::move(params)), lr_(cfg.learning_rate), b1_(cfg.beta1), b2_(cfg.beta2), eps_(cfg.epsilon) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.size(), 0.0);
    v_.emplace_back(p.value.size(), 0.0);
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * g;
      v[i] = b2_ * v[i] + (1.0 - b2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad) {
  const std::size_t n = logits.batch;
  const std::size_t k = logits.sample_size();
  if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count does not match batch");
  if (grad) *grad = Tensor(n, logits.channels, logits.length);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = logits.sample(i);
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= k)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) + " outside the " +
                                  std::to_string(k) + " model outputs");
    const double m = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (double v : z) sum += std::exp(v - m);
    const double log_norm = m + std::log(sum);
    total += log_norm - z[static_cast<std::size_t>(y)];
    if (grad) {
      auto g = grad->sample(i);
      for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(z[j] - log_norm) / static_cast<double>(n);
      g[static_cast<std::size_t>(y)] -= 1.0 / static_cast<double>(n);
    }
  }
  return total / static_cast<double>(n);
}

namespace {

constexpr std::size_t kEvalChunk = 512;

int argmax_row(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

EvalStats evaluate(const Sequential& model, const Dataset& data) {
  EvalStats s;
  if (data.size() == 0) return s;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t b = 0; b < data.size(); b += kEvalChunk) {
    const std::size_t e = std::min(data.size(), b + kEvalChunk);
    const Tensor z = model.infer_logits(slice_batch(data.inputs, b, e));
    const std::span<const int> labels(data.labels.data() + b, e - b);
    loss += cross_entropy(z, labels) * static_cast<double>(e - b);
    for (std::size_t i = 0; i < e - b; ++i)
      if (argmax_row(z.sample(i)) == labels[i]) ++correct;
  }
  s.loss = loss / static_cast<double>(data.size());
  s.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return s;
}

std::vector<int> predict(const Sequential& model, const Tensor& inputs) {
  std::vector<int> out;
  out.reserve(inputs.batch);
  for (std::size_t b = 0; b < inputs.batch; b += kEvalChunk) {
    const std::size_t e = std::min(inputs.batch, b + kEvalChunk);
    const Tensor z = model.infer_logits(slice_batch(inputs, b, e));
    for (std::size_t i = 0; i < e - b; ++i) out.push_back(argmax_row(z.sample(i)));
  }
  return out;
}

TrainHistory train(Sequential& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0) throw std::invalid_argument("train: empty training set");
  if (val_set.size() == 0) throw std::invalid_argument("train: empty validation set");
  if (train_set.inputs.batch != train_set.size() || val_set.inputs.batch != val_set.size())
    throw std::invalid_argument("train: inputs and labels differ in length");

  Rng rng(cfg.seed);
  Adam adam(model.trainable_params(), cfg);
  const bool learns = model.any_trainable();
  EarlyStopping stopper(cfg.patience);
  TrainHistory hist;
  auto best = model.snapshot();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), b + cfg.batch_size);
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      const Tensor x = gather_batch(train_set.inputs, rows);
      std::vector<int> y;
      y.reserve(rows.size());
      for (auto r : rows) y.push_back(train_set.labels[r]);

      Tensor grad;
      const Tensor z = model.forward_logits(x, Mode::train, rng);
      const double loss = cross_entropy(z, y, &grad);
      if (!std::isfinite(loss))
        throw std::runtime_error("training loss became non-finite at epoch " + std::to_string(epoch));
      epoch_loss += loss * static_cast<double>(rows.size());
      if (learns) {
        model.zero_grad();
        model.backward(grad);
        adam.step();
      }
    }
    const EvalStats val = evaluate(model, val_set);
    if (!std::isfinite(val.loss))
      throw std::runtime_error("validation loss became non-finite at epoch " + std::to_string(epoch));
    hist.train_loss.push_back(epoch_loss / static_cast<double>(order.size()));
    hist.val_loss.push_back(val.loss);
    hist.val_accuracy.push_back(val.accuracy);
    hist.epochs_run = epoch;
    if (stopper.update(val.loss)) best = model.snapshot();
    if (stopper.should_stop()) {
      hist.stopped_early = true;
      break;
    }
  }
  hist.best_epoch = stopper.best_epoch();
  model.restore(best);
  return hist;
}

}  // namespace ecgid::nn
