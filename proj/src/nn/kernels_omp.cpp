#include "ecgid/nn/kernels.hpp"

// Eigen supplies the per-block matrix products; all threading is done here so
// the block sizes, and with them the summation order, never depend on the
// thread count.
#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <vector>

namespace ecgid::nn::kernels::parallel {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

constexpr std::size_t kSampleBlock = 16;  // samples per forward/backward block
constexpr std::size_t kRowBlock = 16;     // output channels / features per weight-gradient block

std::int64_t blocks(std::size_t n, std::size_t block) { return static_cast<std::int64_t>((n + block - 1) / block); }

// col[(ci * K + k), (n * L_out + lo)] = x[n, ci, lo * stride + k - padding] (0 outside).
RowMat im2col(const ConvShape& s, std::span<const double> in) {
  const std::size_t lo_len = s.out_length();
  const std::size_t cols = s.batch * lo_len;
  RowMat col(static_cast<Eigen::Index>(s.in_channels * s.kernel), static_cast<Eigen::Index>(cols));
  const auto rows = static_cast<std::int64_t>(s.in_channels * s.kernel);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const std::size_t ci = static_cast<std::size_t>(r) / s.kernel;
    const std::size_t k = static_cast<std::size_t>(r) % s.kernel;
    double* dst = col.data() + static_cast<std::size_t>(r) * cols;
    for (std::size_t n = 0; n < s.batch; ++n) {
      const double* x = in.data() + (n * s.in_channels + ci) * s.in_length;
      double* d = dst + n * lo_len;
      for (std::size_t lo = 0; lo < lo_len; ++lo) {
        const auto li = static_cast<std::ptrdiff_t>(lo * s.stride + k) - static_cast<std::ptrdiff_t>(s.padding);
        d[lo] = li >= 0 && li < static_cast<std::ptrdiff_t>(s.in_length) ? x[li] : 0.0;
      }
    }
  }
  return col;
}

}  // namespace

void conv1d_forward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> bias, std::span<double> out) {
  const std::size_t lo_len = s.out_length();
  const std::size_t ck = s.in_channels * s.kernel;
  const RowMat col = im2col(s, in);
  const MapC wm(w.data(), static_cast<Eigen::Index>(s.out_channels), static_cast<Eigen::Index>(ck));
  const std::int64_t nb = blocks(s.batch, kSampleBlock);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t n0 = static_cast<std::size_t>(b) * kSampleBlock;
    const std::size_t n1 = std::min(s.batch, n0 + kSampleBlock);
    const auto width = static_cast<Eigen::Index>((n1 - n0) * lo_len);
    const RowMat y = wm * col.middleCols(static_cast<Eigen::Index>(n0 * lo_len), width);
    for (std::size_t n = n0; n < n1; ++n)
      for (std::size_t co = 0; co < s.out_channels; ++co) {
        const double bv = bias.empty() ? 0.0 : bias[co];
        const double* src = y.data() + co * static_cast<std::size_t>(width) + (n - n0) * lo_len;
        double* dst = out.data() + (n * s.out_channels + co) * lo_len;
        for (std::size_t lo = 0; lo < lo_len; ++lo) dst[lo] = src[lo] + bv;
      }
  }
}

void conv1d_backward(const ConvShape& s, std::span<const double> in, std::span<const double> w,
                     std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                     std::span<double> grad_b) {
  const std::size_t lo_len = s.out_length();
  const std::size_t ck = s.in_channels * s.kernel;
  const std::size_t cols = s.batch * lo_len;

  // grad_out regrouped as (out_channels, batch * L_out).
  RowMat g(static_cast<Eigen::Index>(s.out_channels), static_cast<Eigen::Index>(cols));
  const auto out_ch = static_cast<std::int64_t>(s.out_channels);
#pragma omp parallel for schedule(static)
  for (std::int64_t co = 0; co < out_ch; ++co)
    for (std::size_t n = 0; n < s.batch; ++n)
      std::copy_n(grad_out.data() + (n * s.out_channels + static_cast<std::size_t>(co)) * lo_len, lo_len,
                  g.data() + static_cast<std::size_t>(co) * cols + n * lo_len);

  if (!grad_w.empty() || !grad_b.empty()) {
    const RowMat col = grad_w.empty() ? RowMat() : im2col(s, in);
    const std::int64_t nb = blocks(s.out_channels, kRowBlock);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < nb; ++b) {
      const std::size_t r0 = static_cast<std::size_t>(b) * kRowBlock;
      const auto rows = static_cast<Eigen::Index>(std::min(s.out_channels, r0 + kRowBlock) - r0);
      const auto gb = g.middleRows(static_cast<Eigen::Index>(r0), rows);
      if (!grad_b.empty()) {
        const Eigen::VectorXd sums = gb.rowwise().sum();
        for (Eigen::Index r = 0; r < rows; ++r) grad_b[r0 + static_cast<std::size_t>(r)] += sums(r);
      }
      if (!grad_w.empty()) {
        Map gw(grad_w.data() + r0 * ck, rows, static_cast<Eigen::Index>(ck));
        gw.noalias() += gb * col.transpose();
      }
    }
  }

  if (grad_in.empty()) return;
  const MapC wm(w.data(), static_cast<Eigen::Index>(s.out_channels), static_cast<Eigen::Index>(ck));
  const std::int64_t nb = blocks(s.batch, kSampleBlock);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t n0 = static_cast<std::size_t>(b) * kSampleBlock;
    const std::size_t n1 = std::min(s.batch, n0 + kSampleBlock);
    const auto width = static_cast<Eigen::Index>((n1 - n0) * lo_len);
    const RowMat gcol = wm.transpose() * g.middleCols(static_cast<Eigen::Index>(n0 * lo_len), width);
    for (std::size_t n = n0; n < n1; ++n)
      for (std::size_t ci = 0; ci < s.in_channels; ++ci) {
        double* gx = grad_in.data() + (n * s.in_channels + ci) * s.in_length;
        std::fill(gx, gx + s.in_length, 0.0);
        for (std::size_t k = 0; k < s.kernel; ++k) {
          const double* src = gcol.data() + (ci * s.kernel + k) * static_cast<std::size_t>(width) + (n - n0) * lo_len;
          for (std::size_t lo = 0; lo < lo_len; ++lo) {
            const auto li = static_cast<std::ptrdiff_t>(lo * s.stride + k) - static_cast<std::ptrdiff_t>(s.padding);
            if (li >= 0 && li < static_cast<std::ptrdiff_t>(s.in_length)) gx[li] += src[lo];
          }
        }
      }
  }
}

void dense_forward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                   std::span<const double> bias, std::span<double> out) {
  // Outputs are produced in zero-padded blocks of kRowBlock, so every output
  // column comes from a product of the same shape whatever out_features is and
  // dropping trailing outputs leaves the others bit-identical.
  const auto nin = static_cast<Eigen::Index>(s.in_features);
  const std::size_t ob = (s.out_features + kRowBlock - 1) / kRowBlock;
  RowMat wpad = RowMat::Zero(static_cast<Eigen::Index>(ob * kRowBlock), nin);
  std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(s.out_features * s.in_features), wpad.data());
  const std::int64_t nb = blocks(s.batch, kSampleBlock);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t n0 = static_cast<std::size_t>(b) * kSampleBlock;
    const auto rows = static_cast<Eigen::Index>(std::min(s.batch, n0 + kSampleBlock) - n0);
    const MapC x(in.data() + n0 * s.in_features, rows, nin);
    for (std::size_t o = 0; o < ob; ++o) {
      const RowMat y = x * wpad.middleRows(static_cast<Eigen::Index>(o * kRowBlock), kRowBlock).transpose();
      const std::size_t o0 = o * kRowBlock;
      const std::size_t o1 = std::min(s.out_features, o0 + kRowBlock);
      for (Eigen::Index r = 0; r < rows; ++r) {
        double* dst = out.data() + (n0 + static_cast<std::size_t>(r)) * s.out_features;
        for (std::size_t k = o0; k < o1; ++k)
          dst[k] = y(r, static_cast<Eigen::Index>(k - o0)) + (bias.empty() ? 0.0 : bias[k]);
      }
    }
  }
}

void dense_backward(const DenseShape& s, std::span<const double> in, std::span<const double> w,
                    std::span<const double> grad_out, std::span<double> grad_in, std::span<double> grad_w,
                    std::span<double> grad_b) {
  const auto nin = static_cast<Eigen::Index>(s.in_features);
  const auto nout = static_cast<Eigen::Index>(s.out_features);
  const auto batch = static_cast<Eigen::Index>(s.batch);
  const MapC g(grad_out.data(), batch, nout);
  const MapC x(in.data(), batch, nin);
  if (!grad_in.empty()) {
    const MapC wm(w.data(), nout, nin);
    const std::int64_t nb = blocks(s.batch, kSampleBlock);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < nb; ++b) {
      const std::size_t n0 = static_cast<std::size_t>(b) * kSampleBlock;
      const auto rows = static_cast<Eigen::Index>(std::min(s.batch, n0 + kSampleBlock) - n0);
      Map gx(grad_in.data() + n0 * s.in_features, rows, nin);
      gx.noalias() = g.middleRows(static_cast<Eigen::Index>(n0), rows) * wm;
    }
  }
  if (grad_w.empty() && grad_b.empty()) return;
  const std::int64_t nb = blocks(s.out_features, kRowBlock);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < nb; ++b) {
    const std::size_t o0 = static_cast<std::size_t>(b) * kRowBlock;
    const auto rows = static_cast<Eigen::Index>(std::min(s.out_features, o0 + kRowBlock) - o0);
    const auto gb = g.middleCols(static_cast<Eigen::Index>(o0), rows);
    if (!grad_b.empty()) {
      const Eigen::RowVectorXd sums = gb.colwise().sum();
      for (Eigen::Index r = 0; r < rows; ++r) grad_b[o0 + static_cast<std::size_t>(r)] += sums(r);
    }
    if (!grad_w.empty()) {
      Map gw(grad_w.data() + o0 * s.in_features, rows, nin);
      gw.noalias() += gb.transpose() * x;
    }
  }
}

}  // namespace ecgid::nn::kernels::parallel
