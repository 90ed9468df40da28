#pragma once

#include "ecgid/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace ecgid::testing {

using nn::Layer;
using nn::Mode;
using nn::Rng;
using nn::Shape;
using nn::Tensor;

inline Tensor random_tensor(std::size_t n, std::size_t c, std::size_t l, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(n, c, l);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
  return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0);
}

inline double l2(const std::vector<double>& v) { return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0)); }

inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const double denom = l2(a) + l2(b);
  return denom == 0.0 ? 0.0 : l2(d) / denom;
}

// L = <c, layer(x)> in train mode with a fixed dropout stream.
inline double probe(Layer& layer, const Tensor& x, const Tensor& c) {
  Rng rng(99);
  return dot(layer.forward(x, Mode::train, rng), c);
}

struct GradError {
  double input = 0.0;
  double params = 0.0;
};

inline GradError gradient_check(Layer& layer, Tensor x, Rng& rng) {
  constexpr double h = 1e-5;
  const Shape out = layer.output_shape(x.sample_shape());
  const Tensor c = random_tensor(x.batch, out.channels, out.length, rng);

  for (auto& p : layer.params()) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  probe(layer, x, c);
  const Tensor gx = layer.backward(c, true);
  std::vector<double> analytic_params;
  for (auto& p : layer.params()) analytic_params.insert(analytic_params.end(), p.grad.begin(), p.grad.end());

  std::vector<double> numeric_x(x.data.size());
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    const double v = x.data[i];
    x.data[i] = v + h;
    const double up = probe(layer, x, c);
    x.data[i] = v - h;
    const double down = probe(layer, x, c);
    x.data[i] = v;
    numeric_x[i] = (up - down) / (2 * h);
  }
  std::vector<double> numeric_params;
  for (auto& p : layer.params())
    for (double& w : p.value) {
      const double v = w;
      w = v + h;
      const double up = probe(layer, x, c);
      w = v - h;
      const double down = probe(layer, x, c);
      w = v;
      numeric_params.push_back((up - down) / (2 * h));
    }
  return {rel_error(gx.data, numeric_x), rel_error(analytic_params, numeric_params)};
}

// Values whose pairwise gaps and distance from zero exceed the probe step.
inline Tensor spread_tensor(std::size_t n, std::size_t c, std::size_t l, Rng& rng) {
  Tensor t(n, c, l);
  std::vector<double> vals(t.data.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.05 + 0.01 * static_cast<double>(i);
  std::shuffle(vals.begin(), vals.end(), rng);
  std::bernoulli_distribution neg(0.5);
  for (std::size_t i = 0; i < vals.size(); ++i) t.data[i] = neg(rng) ? -vals[i] : vals[i];
  return t;
}

}  // namespace ecgid::testing
