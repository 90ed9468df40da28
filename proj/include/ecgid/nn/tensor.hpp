#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ecgid::nn {

// (channels, length) of one sample.
struct Shape {
  std::size_t channels = 1;
  std::size_t length = 1;

  std::size_t size() const { return channels * length; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Dense (batch, channels, length) tensor, row-major.
struct Tensor {
  std::size_t batch = 0;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t n, std::size_t c, std::size_t l) : batch(n), channels(c), length(l), data(n * c * l, 0.0) {}

  Shape sample_shape() const { return {channels, length}; }
  std::size_t sample_size() const { return channels * length; }
  double& at(std::size_t n, std::size_t c, std::size_t l) { return data[(n * channels + c) * length + l]; }
  double at(std::size_t n, std::size_t c, std::size_t l) const { return data[(n * channels + c) * length + l]; }
  std::span<double> sample(std::size_t n) { return {data.data() + n * sample_size(), sample_size()}; }
  std::span<const double> sample(std::size_t n) const { return {data.data() + n * sample_size(), sample_size()}; }
};

// Rows [begin, end) of `t`.
Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t end);
// Gathers the listed rows.
Tensor gather_batch(const Tensor& t, std::span<const std::size_t> rows);
// Concatenates samples of equal batch along the channel axis; all inputs
// must have length 1.
Tensor concat_features(std::span<const Tensor> parts);

}  // namespace ecgid::nn
