#include "ecgid/nn/layers.hpp"

#include "ecgid/nn/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ecgid::nn {

std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(' << s.channels << ", " << s.length << ')';
  return os.str();
}

Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t end) {
  Tensor out(end - begin, t.channels, t.length);
  std::copy(t.data.begin() + static_cast<std::ptrdiff_t>(begin * t.sample_size()),
            t.data.begin() + static_cast<std::ptrdiff_t>(end * t.sample_size()), out.data.begin());
  return out;
}

Tensor gather_batch(const Tensor& t, std::span<const std::size_t> rows) {
  Tensor out(rows.size(), t.channels, t.length);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto src = t.sample(rows[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

Tensor concat_features(std::span<const Tensor> parts) {
  if (parts.empty()) return {};
  std::size_t width = 0;
  for (const auto& p : parts) {
    if (p.batch != parts.front().batch || p.length != 1)
      throw std::invalid_argument("concat_features: parts must share batch and have length 1");
    width += p.channels;
  }
  Tensor out(parts.front().batch, width, 1);
  for (std::size_t n = 0; n < out.batch; ++n) {
    auto dst = out.sample(n).begin();
    for (const auto& p : parts) dst = std::copy(p.sample(n).begin(), p.sample(n).end(), dst);
  }
  return out;
}

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::relu: return "relu";
    case LayerKind::max_pool: return "max_pool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::fully_connected: return "fully_connected";
    case LayerKind::dropout: return "dropout";
    case LayerKind::softmax: return "softmax";
  }
  return "?";
}

LayerSpec LayerSpec::conv(int in, int out, int kernel, int stride, int padding, bool bias) {
  LayerSpec s;
  s.kind = LayerKind::conv1d;
  s.in_channels = in;
  s.out_channels = out;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  s.bias = bias;
  return s;
}

LayerSpec LayerSpec::batch_norm(int channels) {
  LayerSpec s;
  s.kind = LayerKind::batch_norm;
  s.in_channels = channels;
  return s;
}

LayerSpec LayerSpec::relu() {
  LayerSpec s;
  s.kind = LayerKind::relu;
  return s;
}

LayerSpec LayerSpec::max_pool(int size) {
  LayerSpec s;
  s.kind = LayerKind::max_pool;
  s.pool = size;
  return s;
}

LayerSpec LayerSpec::flatten() {
  LayerSpec s;
  s.kind = LayerKind::flatten;
  return s;
}

LayerSpec LayerSpec::fully_connected(int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

LayerSpec LayerSpec::dropout(double rate) {
  LayerSpec s;
  s.kind = LayerKind::dropout;
  s.dropout_rate = rate;
  return s;
}

LayerSpec LayerSpec::softmax() {
  LayerSpec s;
  s.kind = LayerKind::softmax;
  return s;
}

std::vector<std::span<const double>> Layer::tensors() const {
  auto spans = const_cast<Layer*>(this)->tensors();
  return {spans.begin(), spans.end()};
}

std::unique_ptr<Layer> make_layer(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::conv1d: return std::make_unique<Conv1d>(spec);
    case LayerKind::batch_norm: return std::make_unique<BatchNorm>(spec);
    case LayerKind::relu: return std::make_unique<ReLU>();
    case LayerKind::max_pool: return std::make_unique<MaxPool>(spec);
    case LayerKind::flatten: return std::make_unique<Flatten>();
    case LayerKind::fully_connected: return std::make_unique<FullyConnected>(spec);
    case LayerKind::dropout: return std::make_unique<Dropout>(spec);
    case LayerKind::softmax: return std::make_unique<Softmax>();
  }
  throw std::invalid_argument("make_layer: unknown layer kind");
}

namespace {

void uniform_fill(std::vector<double>& v, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : v) x = dist(rng);
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(const LayerSpec& spec) : spec_(spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1 || spec.kernel < 1 || spec.stride < 1 || spec.padding < 0)
    throw std::invalid_argument("conv1d: channels, kernel and stride must be positive");
  weight_.assign(static_cast<std::size_t>(spec.out_channels * spec.in_channels * spec.kernel), 0.0);
  grad_weight_.assign(weight_.size(), 0.0);
  if (spec.bias) {
    bias_.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
    grad_bias_.assign(bias_.size(), 0.0);
  }
}

Shape Conv1d::output_shape(Shape in) const {
  if (in.channels != static_cast<std::size_t>(spec_.in_channels))
    throw std::invalid_argument("conv1d expects " + std::to_string(spec_.in_channels) + " channels, got " +
                                to_string(in));
  const long span = static_cast<long>(in.length) + 2L * spec_.padding - spec_.kernel;
  if (span < 0) throw std::invalid_argument("conv1d: input " + to_string(in) + " shorter than kernel");
  return {static_cast<std::size_t>(spec_.out_channels), static_cast<std::size_t>(span / spec_.stride + 1)};
}

void Conv1d::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_channels * spec_.kernel));
  uniform_fill(weight_, bound, rng);
  uniform_fill(bias_, bound, rng);
}

namespace {

kernels::ConvShape conv_shape(const LayerSpec& s, const Tensor& x) {
  kernels::ConvShape cs;
  cs.batch = x.batch;
  cs.in_channels = static_cast<std::size_t>(s.in_channels);
  cs.out_channels = static_cast<std::size_t>(s.out_channels);
  cs.in_length = x.length;
  cs.kernel = static_cast<std::size_t>(s.kernel);
  cs.stride = static_cast<std::size_t>(s.stride);
  cs.padding = static_cast<std::size_t>(s.padding);
  return cs;
}

}  // namespace

Tensor Conv1d::infer(const Tensor& x) const {
  const Shape out_shape = output_shape(x.sample_shape());
  Tensor y(x.batch, out_shape.channels, out_shape.length);
  kernels::conv1d_forward(conv_shape(spec_, x), x.data, weight_, bias_, y.data);
  return y;
}

Tensor Conv1d::forward(const Tensor& x, Mode, Rng&) {
  input_ = x;
  return infer(x);
}

Tensor Conv1d::backward(const Tensor& grad_out, bool accumulate_params) {
  Tensor grad_in(input_.batch, input_.channels, input_.length);
  kernels::conv1d_backward(conv_shape(spec_, input_), input_.data, weight_, grad_out.data, grad_in.data,
                           accumulate_params ? std::span<double>(grad_weight_) : std::span<double>(),
                           accumulate_params ? std::span<double>(grad_bias_) : std::span<double>());
  return grad_in;
}

std::vector<ParamRef> Conv1d::params() {
  std::vector<ParamRef> p{{weight_, grad_weight_}};
  if (spec_.bias) p.push_back({bias_, grad_bias_});
  return p;
}

std::vector<std::span<double>> Conv1d::tensors() {
  std::vector<std::span<double>> t{weight_};
  if (spec_.bias) t.emplace_back(bias_);
  return t;
}

// ---------------------------------------------------------------------------
// BatchNorm

BatchNorm::BatchNorm(const LayerSpec& spec) : spec_(spec) {
  if (spec.in_channels < 1) throw std::invalid_argument("batch_norm: channels must be positive");
  const auto c = static_cast<std::size_t>(spec.in_channels);
  gamma_.assign(c, 1.0);
  beta_.assign(c, 0.0);
  grad_gamma_.assign(c, 0.0);
  grad_beta_.assign(c, 0.0);
  running_mean_.assign(c, 0.0);
  running_var_.assign(c, 1.0);
}

Shape BatchNorm::output_shape(Shape in) const {
  if (in.channels != static_cast<std::size_t>(spec_.in_channels))
    throw std::invalid_argument("batch_norm expects " + std::to_string(spec_.in_channels) + " channels, got " +
                                to_string(in));
  return in;
}

void BatchNorm::initialize(Rng&) {
  std::fill(gamma_.begin(), gamma_.end(), 1.0);
  std::fill(beta_.begin(), beta_.end(), 0.0);
  std::fill(running_mean_.begin(), running_mean_.end(), 0.0);
  std::fill(running_var_.begin(), running_var_.end(), 1.0);
}

Tensor BatchNorm::infer(const Tensor& x) const {
  output_shape(x.sample_shape());
  Tensor y = x;
  for (std::size_t c = 0; c < x.channels; ++c) {
    const double inv = 1.0 / std::sqrt(running_var_[c] + kEps);
    const double scale = gamma_[c] * inv;
    const double shift = beta_[c] - running_mean_[c] * scale;
    for (std::size_t n = 0; n < x.batch; ++n) {
      double* row = &y.at(n, c, 0);
      for (std::size_t l = 0; l < x.length; ++l) row[l] = row[l] * scale + shift;
    }
  }
  return y;
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode, Rng&) {
  output_shape(x.sample_shape());
  const std::size_t channels = x.channels;
  const std::size_t count = x.batch * x.length;
  x_hat_ = Tensor(x.batch, x.channels, x.length);
  inv_std_.assign(channels, 0.0);
  used_batch_stats_ = mode == Mode::train;
  Tensor y(x.batch, x.channels, x.length);
  for (std::size_t c = 0; c < channels; ++c) {
    double mean = running_mean_[c];
    double var = running_var_[c];
    if (used_batch_stats_) {
      mean = 0.0;
      for (std::size_t n = 0; n < x.batch; ++n)
        for (std::size_t l = 0; l < x.length; ++l) mean += x.at(n, c, l);
      mean /= static_cast<double>(count);
      var = 0.0;
      for (std::size_t n = 0; n < x.batch; ++n)
        for (std::size_t l = 0; l < x.length; ++l) var += (x.at(n, c, l) - mean) * (x.at(n, c, l) - mean);
      const double unbiased = count > 1 ? var / static_cast<double>(count - 1) : 0.0;
      var /= static_cast<double>(count);
      running_mean_[c] = (1.0 - kMomentum) * running_mean_[c] + kMomentum * mean;
      running_var_[c] = (1.0 - kMomentum) * running_var_[c] + kMomentum * unbiased;
    }
    const double inv = 1.0 / std::sqrt(var + kEps);
    inv_std_[c] = inv;
    for (std::size_t n = 0; n < x.batch; ++n)
      for (std::size_t l = 0; l < x.length; ++l) {
        const double xh = (x.at(n, c, l) - mean) * inv;
        x_hat_.at(n, c, l) = xh;
        y.at(n, c, l) = gamma_[c] * xh + beta_[c];
      }
  }
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out, bool accumulate_params) {
  const std::size_t count = grad_out.batch * grad_out.length;
  Tensor grad_in(grad_out.batch, grad_out.channels, grad_out.length);
  for (std::size_t c = 0; c < grad_out.channels; ++c) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t n = 0; n < grad_out.batch; ++n)
      for (std::size_t l = 0; l < grad_out.length; ++l) {
        sum_dy += grad_out.at(n, c, l);
        sum_dy_xh += grad_out.at(n, c, l) * x_hat_.at(n, c, l);
      }
    if (accumulate_params) {
      grad_gamma_[c] += sum_dy_xh;
      grad_beta_[c] += sum_dy;
    }
    const double scale = gamma_[c] * inv_std_[c];
    for (std::size_t n = 0; n < grad_out.batch; ++n)
      for (std::size_t l = 0; l < grad_out.length; ++l) {
        const double dy = grad_out.at(n, c, l);
        grad_in.at(n, c, l) =
            used_batch_stats_
                ? scale * (dy - sum_dy / static_cast<double>(count) -
                           x_hat_.at(n, c, l) * sum_dy_xh / static_cast<double>(count))
                : scale * dy;
      }
  }
  return grad_in;
}

std::vector<ParamRef> BatchNorm::params() { return {{gamma_, grad_gamma_}, {beta_, grad_beta_}}; }

std::vector<std::span<double>> BatchNorm::tensors() { return {gamma_, beta_, running_mean_, running_var_}; }

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::infer(const Tensor& x) const {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor ReLU::forward(const Tensor& x, Mode, Rng&) {
  input_ = x;
  return infer(x);
}

Tensor ReLU::backward(const Tensor& grad_out, bool) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i)
    if (!(input_.data[i] > 0.0)) g.data[i] = 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// MaxPool

Shape MaxPool::output_shape(Shape in) const {
  if (spec_.pool < 1) throw std::invalid_argument("max_pool: size must be positive");
  const auto p = static_cast<std::size_t>(spec_.pool);
  if (in.length < p) throw std::invalid_argument("max_pool: input " + to_string(in) + " shorter than window");
  return {in.channels, in.length / p};
}

Tensor MaxPool::pool(const Tensor& x, std::vector<std::size_t>* argmax) const {
  const Shape out_shape = output_shape(x.sample_shape());
  const auto p = static_cast<std::size_t>(spec_.pool);
  Tensor y(x.batch, out_shape.channels, out_shape.length);
  if (argmax) argmax->assign(y.data.size(), 0);
  for (std::size_t n = 0; n < x.batch; ++n)
    for (std::size_t c = 0; c < x.channels; ++c)
      for (std::size_t l = 0; l < out_shape.length; ++l) {
        std::size_t best = l * p;
        for (std::size_t j = l * p + 1; j < l * p + p; ++j)
          if (x.at(n, c, j) > x.at(n, c, best)) best = j;
        y.at(n, c, l) = x.at(n, c, best);
        if (argmax) (*argmax)[(n * y.channels + c) * y.length + l] = (n * x.channels + c) * x.length + best;
      }
  return y;
}

Tensor MaxPool::infer(const Tensor& x) const { return pool(x, nullptr); }

Tensor MaxPool::forward(const Tensor& x, Mode, Rng&) {
  in_shape_ = x.sample_shape();
  return pool(x, &argmax_);
}

Tensor MaxPool::backward(const Tensor& grad_out, bool) {
  Tensor g(grad_out.batch, in_shape_.channels, in_shape_.length);
  for (std::size_t i = 0; i < grad_out.data.size(); ++i) g.data[argmax_[i]] += grad_out.data[i];
  return g;
}

// ---------------------------------------------------------------------------
// Flatten

Tensor Flatten::infer(const Tensor& x) const {
  Tensor y = x;
  y.channels = x.channels * x.length;
  y.length = 1;
  return y;
}

Tensor Flatten::forward(const Tensor& x, Mode, Rng&) {
  in_shape_ = x.sample_shape();
  return infer(x);
}

Tensor Flatten::backward(const Tensor& grad_out, bool) {
  Tensor g = grad_out;
  g.channels = in_shape_.channels;
  g.length = in_shape_.length;
  return g;
}

// ---------------------------------------------------------------------------
// FullyConnected

FullyConnected::FullyConnected(const LayerSpec& spec) : spec_(spec) {
  if (spec.in_channels < 1 || spec.out_channels < 1)
    throw std::invalid_argument("fully_connected: feature counts must be positive");
  weight_.assign(static_cast<std::size_t>(spec.out_channels * spec.in_channels), 0.0);
  grad_weight_.assign(weight_.size(), 0.0);
  bias_.assign(static_cast<std::size_t>(spec.out_channels), 0.0);
  grad_bias_.assign(bias_.size(), 0.0);
}

Shape FullyConnected::output_shape(Shape in) const {
  if (in.length != 1 || in.channels != static_cast<std::size_t>(spec_.in_channels))
    throw std::invalid_argument("fully_connected expects (" + std::to_string(spec_.in_channels) + ", 1), got " +
                                to_string(in));
  return {static_cast<std::size_t>(spec_.out_channels), 1};
}

void FullyConnected::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(spec_.in_channels));
  uniform_fill(weight_, bound, rng);
  uniform_fill(bias_, bound, rng);
}

Tensor FullyConnected::infer(const Tensor& x) const {
  output_shape(x.sample_shape());
  Tensor y(x.batch, static_cast<std::size_t>(spec_.out_channels), 1);
  kernels::DenseShape ds{x.batch, static_cast<std::size_t>(spec_.in_channels),
                         static_cast<std::size_t>(spec_.out_channels)};
  kernels::dense_forward(ds, x.data, weight_, bias_, y.data);
  return y;
}

Tensor FullyConnected::forward(const Tensor& x, Mode, Rng&) {
  input_ = x;
  return infer(x);
}

Tensor FullyConnected::backward(const Tensor& grad_out, bool accumulate_params) {
  Tensor grad_in(input_.batch, input_.channels, 1);
  kernels::DenseShape ds{input_.batch, static_cast<std::size_t>(spec_.in_channels),
                         static_cast<std::size_t>(spec_.out_channels)};
  kernels::dense_backward(ds, input_.data, weight_, grad_out.data, grad_in.data,
                          accumulate_params ? std::span<double>(grad_weight_) : std::span<double>(),
                          accumulate_params ? std::span<double>(grad_bias_) : std::span<double>());
  return grad_in;
}

std::vector<ParamRef> FullyConnected::params() { return {{weight_, grad_weight_}, {bias_, grad_bias_}}; }

std::vector<std::span<double>> FullyConnected::tensors() { return {weight_, bias_}; }

void FullyConnected::truncate_outputs(int outputs) {
  if (outputs < 1 || outputs > spec_.out_channels)
    throw std::invalid_argument("truncate_outputs: " + std::to_string(outputs) + " outside [1, " +
                                std::to_string(spec_.out_channels) + "]");
  const auto keep = static_cast<std::size_t>(outputs);
  weight_.resize(keep * static_cast<std::size_t>(spec_.in_channels));
  grad_weight_.assign(weight_.size(), 0.0);
  bias_.resize(keep);
  grad_bias_.assign(keep, 0.0);
  spec_.out_channels = outputs;
}

// ---------------------------------------------------------------------------
// Dropout

Tensor Dropout::forward(const Tensor& x, Mode mode, Rng& rng) {
  const double p = spec_.dropout_rate;
  if (mode == Mode::infer || p <= 0.0) {
    mask_.assign(x.data.size(), 1.0);
    return x;
  }
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  mask_.resize(x.data.size());
  Tensor y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    mask_[i] = keep(rng) ? scale : 0.0;
    y.data[i] *= mask_[i];
  }
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out, bool) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] *= mask_[i];
  return g;
}

// ---------------------------------------------------------------------------
// Softmax

Tensor softmax_rows(const Tensor& logits) {
  Tensor p = logits;
  for (std::size_t n = 0; n < p.batch; ++n) {
    auto row = p.sample(n);
    const double m = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& v : row) {
      v = std::exp(v - m);
      sum += v;
    }
    for (double& v : row) v /= sum;
  }
  return p;
}

Tensor Softmax::infer(const Tensor& x) const { return softmax_rows(x); }

Tensor Softmax::forward(const Tensor& x, Mode, Rng&) {
  output_ = softmax_rows(x);
  return output_;
}

Tensor Softmax::backward(const Tensor& grad_out, bool) {
  Tensor g = grad_out;
  for (std::size_t n = 0; n < g.batch; ++n) {
    const auto y = output_.sample(n);
    auto gr = g.sample(n);
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += gr[i] * y[i];
    for (std::size_t i = 0; i < y.size(); ++i) gr[i] = y[i] * (gr[i] - dot);
  }
  return g;
}

}  // namespace ecgid::nn
