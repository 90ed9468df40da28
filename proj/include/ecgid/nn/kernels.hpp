#pragma once

// Compute kernels for the 1-D CNN. Every kernel exists twice: a plain serial
// reference used by the tests, and an OpenMP version used for training. The
// parallel versions split work into fixed-size blocks, each reduced by one
// thread in a fixed order, so results do not depend on the thread count.

#include <cstddef>
#include <span>

namespace ecgid::nn::kernels {

struct ConvShape {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_length = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_length() const { return (in_length + 2 * padding - kernel) / stride + 1; }
};

struct DenseShape {
  std::size_t batch = 0;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
};

enum class Backend { serial, parallel };

// Process-wide selection used by the layers. Defaults to parallel.
void set_backend(Backend b);
Backend backend();

// Conventions: weights are (out, in, kernel) / (out, in); `bias` may be empty.
// Forward overwrites `out`. Backward overwrites `grad_in` (skipped if empty)
// and accumulates into `grad_w` / `grad_b`.
namespace serial {
void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b);
void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out);
void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b);
}  // namespace serial

namespace parallel {
void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b);
void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out);
void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b);
}  // namespace parallel

// Dispatch on backend().
void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out);
void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b);
void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out);
void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b);

}  // namespace ecgid::nn::kernels
