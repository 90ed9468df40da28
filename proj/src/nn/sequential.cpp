#include "ecgid/nn/sequential.hpp"

#include "ecgid/signal.hpp"

#include <cstring>

namespace ecgid::nn {

Sequential::Sequential(Shape input, const std::vector<LayerSpec>& specs, std::uint64_t seed)
    : input_(input), seed_(seed) {
  Rng rng(seed);
  Shape s = input;
  for (const auto& spec : specs) {
    auto layer = make_layer(spec);
    s = layer->output_shape(s);
    layer->initialize(rng);
    layers_.push_back(std::move(layer));
  }
  trainable_.assign(layers_.size(), true);
}

Sequential::Sequential(const Sequential& other)
    : input_(other.input_), trainable_(other.trainable_), seed_(other.seed_) {
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
  if (this != &other) {
    Sequential copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Shape Sequential::shape_after(std::size_t n) const {
  Shape s = input_;
  for (std::size_t i = 0; i < n && i < layers_.size(); ++i) s = layers_[i]->output_shape(s);
  return s;
}

Shape Sequential::output_shape() const { return shape_after(layers_.size()); }

std::vector<LayerSpec> Sequential::specs() const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) out.push_back(l->spec());
  return out;
}

void Sequential::freeze_all() { trainable_.assign(layers_.size(), false); }

bool Sequential::any_trainable() const {
  for (bool t : trainable_)
    if (t) return true;
  return false;
}

std::size_t Sequential::logits_end() const {
  if (!layers_.empty() && layers_.back()->spec().kind == LayerKind::softmax) return layers_.size() - 1;
  return layers_.size();
}

namespace {

void check_input(const Tensor& x, Shape expected) {
  if (x.sample_shape() != expected)
    throw std::invalid_argument("model expects input " + to_string(expected) + ", got " +
                                to_string(x.sample_shape()));
}

}  // namespace

Tensor Sequential::infer_prefix(const Tensor& x, std::size_t n) const {
  check_input(x, input_);
  Tensor h = x;
  for (std::size_t i = 0; i < n && i < layers_.size(); ++i) h = layers_[i]->infer(h);
  return h;
}

Tensor Sequential::infer(const Tensor& x) const {
  Tensor z = infer_logits(x);
  return logits_end() < layers_.size() ? softmax_rows(z) : z;
}

Tensor Sequential::infer_logits(const Tensor& x) const { return infer_prefix(x, logits_end()); }

Tensor Sequential::forward_logits(const Tensor& x, Mode mode, Rng& rng) {
  check_input(x, input_);
  Tensor h = x;
  const std::size_t end = logits_end();
  for (std::size_t i = 0; i < end; ++i) h = layers_[i]->forward(h, trainable_[i] ? mode : Mode::infer, rng);
  return h;
}

void Sequential::backward(const Tensor& grad_logits) {
  std::size_t lowest = layers_.size();
  for (std::size_t i = 0; i < logits_end(); ++i)
    if (trainable_[i]) {
      lowest = i;
      break;
    }
  if (lowest == layers_.size()) return;
  Tensor g = grad_logits;
  for (std::size_t i = logits_end(); i-- > lowest;) g = layers_[i]->backward(g, trainable_[i]);
}

std::vector<ParamRef> Sequential::trainable_params() {
  std::vector<ParamRef> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (trainable_[i])
      for (auto p : layers_[i]->params()) out.push_back(p);
  return out;
}

void Sequential::zero_grad() {
  for (auto& l : layers_)
    for (auto p : l->params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

std::vector<std::vector<double>> Sequential::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const auto& l : layers_) {
    const Layer& cl = *l;
    for (auto t : cl.tensors()) out.emplace_back(t.begin(), t.end());
  }
  return out;
}

void Sequential::restore(const std::vector<std::vector<double>>& state) {
  std::size_t k = 0;
  for (auto& l : layers_)
    for (auto t : l->tensors()) {
      if (k >= state.size() || state[k].size() != t.size())
        throw std::invalid_argument("restore: state does not match the model layout");
      std::copy(state[k].begin(), state[k].end(), t.begin());
      ++k;
    }
  if (k != state.size()) throw std::invalid_argument("restore: state has extra tensors");
}

std::uint64_t Sequential::parameter_hash(std::size_t n) const {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n && i < layers_.size(); ++i) {
    const Layer& cl = *layers_[i];
    for (auto t : cl.tensors()) {
      const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
      for (std::size_t b = 0; b < t.size_bytes(); ++b) {
        h ^= bytes[b];
        h *= 1099511628211ULL;
      }
    }
  }
  return h;
}

std::uint64_t Sequential::parameter_hash() const { return parameter_hash(layers_.size()); }

void Sequential::truncate(std::size_t n) {
  if (n > layers_.size()) throw std::invalid_argument("truncate: model has fewer layers");
  layers_.resize(n);
  trainable_.resize(n);
}

Sequential Sequential::tail(std::size_t n) const {
  if (n > layers_.size()) throw std::invalid_argument("tail: model has fewer layers");
  Sequential out;
  out.input_ = shape_after(n);
  out.seed_ = seed_;
  for (std::size_t i = n; i < layers_.size(); ++i) {
    out.layers_.push_back(layers_[i]->clone());
    out.trainable_.push_back(trainable_[i]);
  }
  return out;
}

std::size_t backbone_width(int input_len) {
  if (input_len != 50 && input_len != 70 && input_len != 110)
    throw ConfigError("input_len must be one of 50, 70, 110 (got " + std::to_string(input_len) + ")");
  return 64 * static_cast<std::size_t>(input_len / 2 / 2);
}

void HeadSpec::validate() const {
  if (hidden_units < 1) throw ConfigError("architecture.hidden_units must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("architecture.dropout must lie in [0, 1)");
}

std::vector<LayerSpec> classifier_head(int in_features, int num_classes, const HeadSpec& head) {
  head.validate();
  return {LayerSpec::fully_connected(in_features, head.hidden_units), LayerSpec::relu(),
          LayerSpec::dropout(head.dropout), LayerSpec::fully_connected(head.hidden_units, num_classes),
          LayerSpec::softmax()};
}

Sequential build_standard_cnn(int input_len, int num_classes, std::uint64_t seed, const HeadSpec& head) {
  const auto width = static_cast<int>(backbone_width(input_len));
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  std::vector<LayerSpec> specs{
      LayerSpec::conv(1, 16, 7, 1, 3),  LayerSpec::batch_norm(16), LayerSpec::relu(), LayerSpec::max_pool(2),
      LayerSpec::conv(16, 32, 5, 1, 2), LayerSpec::batch_norm(32), LayerSpec::relu(), LayerSpec::max_pool(2),
      LayerSpec::conv(32, 64, 3, 1, 1), LayerSpec::batch_norm(64), LayerSpec::relu(), LayerSpec::flatten(),
  };
  for (auto s : classifier_head(width, num_classes, head)) specs.push_back(s);
  return Sequential({1, static_cast<std::size_t>(input_len)}, specs, seed);
}

}  // namespace ecgid::nn
