#pragma once

#include "ecgid/nn/layers.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace ecgid::nn {

// An ordered layer stack with a per-layer trainable mask. Frozen layers always
// run in inference mode, so their batch-norm statistics never move.
class Sequential {
 public:
  Sequential() = default;
  // Throws std::invalid_argument when the shapes do not compose.
  Sequential(Shape input, const std::vector<LayerSpec>& specs, std::uint64_t seed);
  Sequential(const Sequential& other);
  Sequential& operator=(const Sequential& other);
  Sequential(Sequential&&) noexcept = default;
  Sequential& operator=(Sequential&&) noexcept = default;

  Shape input_shape() const { return input_; }
  Shape output_shape() const;
  // Shape after the first `n` layers.
  Shape shape_after(std::size_t n) const;
  std::size_t size() const { return layers_.size(); }
  std::uint64_t seed() const { return seed_; }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  std::vector<LayerSpec> specs() const;

  bool trainable(std::size_t i) const { return trainable_.at(i); }
  void set_trainable(std::size_t i, bool on) { trainable_.at(i) = on; }
  void freeze_all();
  bool any_trainable() const;
  const std::vector<bool>& trainable_mask() const { return trainable_; }

  // Class probabilities; rows sum to one.
  Tensor infer(const Tensor& x) const;
  // Output of the stack without a trailing softmax.
  Tensor infer_logits(const Tensor& x) const;
  // Output of the first `n` layers.
  Tensor infer_prefix(const Tensor& x, std::size_t n) const;

  // Training pass up to (not including) a trailing softmax, caching
  // activations for backward().
  Tensor forward_logits(const Tensor& x, Mode mode, Rng& rng);
  // Back-propagates d(loss)/d(logits), stopping at the lowest trainable layer.
  void backward(const Tensor& grad_logits);

  std::vector<ParamRef> trainable_params();
  void zero_grad();

  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& state);
  // FNV-1a over every stored tensor's bytes.
  std::uint64_t parameter_hash() const;
  // Hash of the tensors of the first `n` layers.
  std::uint64_t parameter_hash(std::size_t n) const;

  // Keeps the first `n` layers.
  void truncate(std::size_t n);
  // Copy of layers [n, size()) as a model of its own.
  Sequential tail(std::size_t n) const;

 private:
  std::size_t logits_end() const;

  Shape input_;
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<bool> trainable_;
  std::uint64_t seed_ = 0;
};

inline constexpr std::size_t kBackboneLayers = 12;  // through flatten
inline constexpr int kHiddenUnits = 128;
inline constexpr double kDropoutRate = 0.5;

struct HeadSpec {
  int hidden_units = kHiddenUnits;
  double dropout = kDropoutRate;
  void validate() const;
};

// The three-block 1-D CNN used for every expert and for the baselines.
// input_len must be 50, 70 or 110 (ConfigError otherwise).
Sequential build_standard_cnn(int input_len, int num_classes, std::uint64_t seed, const HeadSpec& head = {});

// Flatten width of the standard CNN for an input length.
std::size_t backbone_width(int input_len);

// FC(width -> hidden) -> ReLU -> Dropout -> FC(-> num_classes) -> Softmax.
std::vector<LayerSpec> classifier_head(int in_features, int num_classes, const HeadSpec& head = {});

}  // namespace ecgid::nn
