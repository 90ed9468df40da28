#pragma once

#include "ecgid/nn/tensor.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ecgid::nn {

enum class LayerKind : std::uint32_t {
  conv1d = 0,
  batch_norm = 1,
  relu = 2,
  max_pool = 3,
  flatten = 4,
  fully_connected = 5,
  dropout = 6,
  softmax = 7,
};

std::string_view to_string(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  int in_channels = 0;   // conv1d, batch_norm (channels), fully_connected (in features)
  int out_channels = 0;  // conv1d, fully_connected (out features)
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int pool = 2;
  bool bias = true;
  double dropout_rate = 0.0;

  bool operator==(const LayerSpec&) const = default;

  static LayerSpec conv(int in, int out, int kernel, int stride = 1, int padding = 0, bool bias = true);
  static LayerSpec batch_norm(int channels);
  static LayerSpec relu();
  static LayerSpec max_pool(int size);
  static LayerSpec flatten();
  static LayerSpec fully_connected(int in, int out);
  static LayerSpec dropout(double rate);
  static LayerSpec softmax();
};

enum class Mode { train, infer };

using Rng = std::mt19937_64;

// A parameter tensor and its gradient buffer.
struct ParamRef {
  std::span<double> value;
  std::span<double> grad;
};

class Layer {
 public:
  virtual ~Layer() = default;

  virtual LayerSpec spec() const = 0;
  // Throws std::invalid_argument if `in` does not fit this layer.
  virtual Shape output_shape(Shape in) const = 0;

  // Caching forward pass used during training. `rng` drives dropout.
  virtual Tensor forward(const Tensor& x, Mode mode, Rng& rng) = 0;
  // Gradient w.r.t. the input of the last forward(); accumulates parameter
  // gradients when `accumulate_params` is set.
  virtual Tensor backward(const Tensor& grad_out, bool accumulate_params) = 0;
  // Stateless inference pass; safe to call concurrently.
  virtual Tensor infer(const Tensor& x) const = 0;

  virtual std::vector<ParamRef> params() { return {}; }
  // Every stored tensor that defines the layer: trainable parameters followed
  // by running statistics.
  virtual std::vector<std::span<double>> tensors() { return {}; }
  std::vector<std::span<const double>> tensors() const;

  virtual std::unique_ptr<Layer> clone() const = 0;
  // Re-draws parameters from `rng`.
  virtual void initialize(Rng& /*rng*/) {}
};

std::unique_ptr<Layer> make_layer(const LayerSpec& spec);

class Conv1d final : public Layer {
 public:
  explicit Conv1d(const LayerSpec& spec);
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> tensors() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv1d>(*this); }
  void initialize(Rng& rng) override;

  std::vector<double>& weights() { return weight_; }
  std::vector<double>& bias() { return bias_; }

 private:
  LayerSpec spec_;
  std::vector<double> weight_, bias_, grad_weight_, grad_bias_;
  Tensor input_;
};

class BatchNorm final : public Layer {
 public:
  explicit BatchNorm(const LayerSpec& spec);
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> tensors() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<BatchNorm>(*this); }
  void initialize(Rng& rng) override;

  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  std::vector<double>& running_mean() { return running_mean_; }
  std::vector<double>& running_var() { return running_var_; }

 private:
  LayerSpec spec_;
  std::vector<double> gamma_, beta_, grad_gamma_, grad_beta_;
  std::vector<double> running_mean_, running_var_;
  // Cached from the last forward.
  Tensor x_hat_;
  std::vector<double> inv_std_;
  bool used_batch_stats_ = false;
};

class ReLU final : public Layer {
 public:
  LayerSpec spec() const override { return LayerSpec::relu(); }
  Shape output_shape(Shape in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<ReLU>(*this); }

 private:
  Tensor input_;
};

class MaxPool final : public Layer {
 public:
  explicit MaxPool(const LayerSpec& spec) : spec_(spec) {}
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool>(*this); }

 private:
  Tensor pool(const Tensor& x, std::vector<std::size_t>* argmax) const;
  LayerSpec spec_;
  Shape in_shape_;
  std::vector<std::size_t> argmax_;
};

class Flatten final : public Layer {
 public:
  LayerSpec spec() const override { return LayerSpec::flatten(); }
  Shape output_shape(Shape in) const override { return {in.size(), 1}; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Flatten>(*this); }

 private:
  Shape in_shape_;
};

class FullyConnected final : public Layer {
 public:
  explicit FullyConnected(const LayerSpec& spec);
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(Shape in) const override;
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::vector<ParamRef> params() override;
  std::vector<std::span<double>> tensors() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<FullyConnected>(*this); }
  void initialize(Rng& rng) override;

  // Keeps the first `outputs` rows of the weight matrix and bias.
  void truncate_outputs(int outputs);

 private:
  LayerSpec spec_;
  std::vector<double> weight_, bias_, grad_weight_, grad_bias_;
  Tensor input_;
};

// Inverted dropout: kept activations are scaled by 1/(1-p) during training,
// inference is the identity.
class Dropout final : public Layer {
 public:
  explicit Dropout(const LayerSpec& spec) : spec_(spec) {}
  LayerSpec spec() const override { return spec_; }
  Shape output_shape(Shape in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override { return x; }
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Dropout>(*this); }

 private:
  LayerSpec spec_;
  std::vector<double> mask_;
};

// Softmax over all features of a sample.
class Softmax final : public Layer {
 public:
  LayerSpec spec() const override { return LayerSpec::softmax(); }
  Shape output_shape(Shape in) const override { return in; }
  Tensor forward(const Tensor& x, Mode mode, Rng& rng) override;
  Tensor backward(const Tensor& grad_out, bool accumulate_params) override;
  Tensor infer(const Tensor& x) const override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Softmax>(*this); }

 private:
  Tensor output_;
};

// Row-wise softmax of logits shaped (n, k, 1).
Tensor softmax_rows(const Tensor& logits);

}  // namespace ecgid::nn
