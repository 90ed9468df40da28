// Serial reference vs OpenMP kernels, and one training epoch of the standard
// CNN under each backend.

#include "ecgid/nn/kernels.hpp"
#include "ecgid/nn/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <vector>

using namespace ecgid::nn;
namespace k = ecgid::nn::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < reps; ++i) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

void bench_conv(const char* name, k::ConvShape s, int reps, std::mt19937_64& rng) {
  const std::size_t lo = s.out_length();
  const auto x = random_vec(s.batch * s.in_channels * s.in_length, rng);
  const auto w = random_vec(s.out_channels * s.in_channels * s.kernel, rng);
  const auto b = random_vec(s.out_channels, rng);
  const auto g = random_vec(s.batch * s.out_channels * lo, rng);
  std::vector<double> ys(g.size()), yp(g.size());
  std::vector<double> gxs(x.size()), gxp(x.size()), gws(w.size()), gwp(w.size()), gbs(b.size()), gbp(b.size());

  const double fs = time_ms([&] { k::serial::conv1d_forward(s, x, w, b, ys); }, reps);
  const double fp = time_ms([&] { k::parallel::conv1d_forward(s, x, w, b, yp); }, reps);
  const double bs = time_ms([&] { k::serial::conv1d_backward(s, x, w, g, gxs, gws, gbs); }, reps);
  const double bp = time_ms([&] { k::parallel::conv1d_backward(s, x, w, g, gxp, gwp, gbp); }, reps);
  std::printf("%-26s fwd %8.3f / %8.3f ms (x%5.2f)  bwd %8.3f / %8.3f ms (x%5.2f)  max|diff| %.2e\n", name, fs, fp,
              fs / fp, bs, bp, bs / bp, std::max(max_diff(ys, yp), max_diff(gxs, gxp)));
}

void bench_dense(const char* name, k::DenseShape s, int reps, std::mt19937_64& rng) {
  const auto x = random_vec(s.batch * s.in_features, rng);
  const auto w = random_vec(s.out_features * s.in_features, rng);
  const auto b = random_vec(s.out_features, rng);
  const auto g = random_vec(s.batch * s.out_features, rng);
  std::vector<double> ys(g.size()), yp(g.size());
  std::vector<double> gxs(x.size()), gxp(x.size()), gws(w.size()), gwp(w.size()), gbs(b.size()), gbp(b.size());

  const double fs = time_ms([&] { k::serial::dense_forward(s, x, w, b, ys); }, reps);
  const double fp = time_ms([&] { k::parallel::dense_forward(s, x, w, b, yp); }, reps);
  const double bs = time_ms([&] { k::serial::dense_backward(s, x, w, g, gxs, gws, gbs); }, reps);
  const double bp = time_ms([&] { k::parallel::dense_backward(s, x, w, g, gxp, gwp, gbp); }, reps);
  std::printf("%-26s fwd %8.3f / %8.3f ms (x%5.2f)  bwd %8.3f / %8.3f ms (x%5.2f)  max|diff| %.2e\n", name, fs, fp,
              fs / fp, bs, bp, bs / bp, std::max(max_diff(ys, yp), max_diff(gxs, gxp)));
}

double epoch_ms(k::Backend backend, std::mt19937_64& rng) {
  constexpr std::size_t kBeats = 1024;
  constexpr int kClasses = 20;
  Dataset train_set{Tensor(kBeats, 1, 110), {}};
  train_set.inputs.data = random_vec(train_set.inputs.data.size(), rng);
  for (std::size_t i = 0; i < kBeats; ++i) train_set.labels.push_back(static_cast<int>(i % kClasses));
  Dataset val_set{Tensor(64, 1, 110), std::vector<int>(64, 0)};
  val_set.inputs.data = random_vec(val_set.inputs.data.size(), rng);

  k::set_backend(backend);
  Sequential model = build_standard_cnn(110, kClasses, 1);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.patience = 5;
  const double ms = time_ms([&] { train(model, train_set, val_set, cfg); }, 1) / cfg.max_epochs;
  k::set_backend(k::Backend::parallel);
  return ms;
}

}  // namespace

int main() {
  std::mt19937_64 rng(42);
  std::printf("threads: %d   columns: serial / parallel\n", omp_get_max_threads());
  bench_conv("conv 1->16 k7 L110", {64, 1, 16, 110, 7, 1, 3}, 20, rng);
  bench_conv("conv 16->32 k5 L55", {64, 16, 32, 55, 5, 1, 2}, 20, rng);
  bench_conv("conv 32->64 k3 L27", {64, 32, 64, 27, 3, 1, 1}, 20, rng);
  bench_dense("dense 1728->128", {64, 1728, 128}, 20, rng);
  bench_dense("dense 1856->128", {64, 1856, 128}, 20, rng);
  const double es = epoch_ms(k::Backend::serial, rng);
  const double ep = epoch_ms(k::Backend::parallel, rng);
  std::printf("standard CNN epoch, 1024 beats: %.1f / %.1f ms (x%.2f)\n", es, ep, es / ep);
  return 0;
}
