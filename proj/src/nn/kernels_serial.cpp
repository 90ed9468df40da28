#include "ecgid/nn/kernels.hpp"

#include <atomic>

namespace ecgid::nn::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::parallel};
}

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

namespace serial {

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t lo_len = s.out_length();
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t lo = 0; lo < lo_len; ++lo) {
        double acc = bias.empty() ? 0.0 : bias[co];
        for (std::size_t ci = 0; ci < s.in_channels; ++ci)
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const auto li = static_cast<std::ptrdiff_t>(lo * s.stride + k) - static_cast<std::ptrdiff_t>(s.padding);
            if (li < 0 || li >= static_cast<std::ptrdiff_t>(s.in_length)) continue;
            acc += w[(co * s.in_channels + ci) * s.kernel + k] *
                   in[(n * s.in_channels + ci) * s.in_length + static_cast<std::size_t>(li)];
          }
        out[(n * s.out_channels + co) * lo_len + lo] = acc;
      }
}

void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const std::size_t lo_len = s.out_length();
  for (double& g : grad_in) g = 0.0;
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t co = 0; co < s.out_channels; ++co)
      for (std::size_t lo = 0; lo < lo_len; ++lo) {
        const double g = grad_out[(n * s.out_channels + co) * lo_len + lo];
        if (!grad_b.empty()) grad_b[co] += g;
        for (std::size_t ci = 0; ci < s.in_channels; ++ci)
          for (std::size_t k = 0; k < s.kernel; ++k) {
            const auto li = static_cast<std::ptrdiff_t>(lo * s.stride + k) - static_cast<std::ptrdiff_t>(s.padding);
            if (li < 0 || li >= static_cast<std::ptrdiff_t>(s.in_length)) continue;
            const std::size_t in_idx = (n * s.in_channels + ci) * s.in_length + static_cast<std::size_t>(li);
            const std::size_t w_idx = (co * s.in_channels + ci) * s.kernel + k;
            if (!grad_w.empty()) grad_w[w_idx] += g * in[in_idx];
            if (!grad_in.empty()) grad_in[in_idx] += g * w[w_idx];
          }
      }
}

void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out) {
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t o = 0; o < s.out_features; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < s.in_features; ++i) acc += w[o * s.in_features + i] * in[n * s.in_features + i];
      out[n * s.out_features + o] = acc;
    }
}

void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b) {
  for (double& g : grad_in) g = 0.0;
  for (std::size_t n = 0; n < s.batch; ++n)
    for (std::size_t o = 0; o < s.out_features; ++o) {
      const double g = grad_out[n * s.out_features + o];
      if (!grad_b.empty()) grad_b[o] += g;
      for (std::size_t i = 0; i < s.in_features; ++i) {
        if (!grad_w.empty()) grad_w[o * s.in_features + i] += g * in[n * s.in_features + i];
        if (!grad_in.empty()) grad_in[n * s.in_features + i] += g * w[o * s.in_features + i];
      }
    }
}

}  // namespace serial

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
  if (backend() == Backend::serial)
    serial::conv1d_forward(s, in, w, bias, out);
  else
    parallel::conv1d_forward(s, in, w, bias, out);
}

void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b) {
  if (backend() == Backend::serial)
    serial::conv1d_backward(s, in, w, grad_out, grad_in, grad_w, grad_b);
  else
    parallel::conv1d_backward(s, in, w, grad_out, grad_in, grad_w, grad_b);
}

void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out) {
  if (backend() == Backend::serial)
    serial::dense_forward(s, in, w, bias, out);
  else
    parallel::dense_forward(s, in, w, bias, out);
}

void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b) {
  if (backend() == Backend::serial)
    serial::dense_backward(s, in, w, grad_out, grad_in, grad_w, grad_b);
  else
    parallel::dense_backward(s, in, w, grad_out, grad_in, grad_w, grad_b);
}

}  // namespace ecgid::nn::kernels
