#include "ecgid/recording_io.hpp"
#include "ecgid/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

using namespace ecgid;

namespace {

constexpr double kFs = 200.0;

// Closed-form magnitude of an analog Butterworth band-pass carried through the
// pre-warped bilinear map.
double butterworth_oracle(const FilterSpec& f, double hz) {
  auto warp = [](double x) { return 2.0 * kFs * std::tan(std::numbers::pi * x / kFs); };
  const double w = warp(hz), wl = warp(f.low_cut_hz), wh = warp(f.high_cut_hz);
  const double ratio = (w * w - wl * wh) / ((wh - wl) * w);
  return 1.0 / std::sqrt(1.0 + std::pow(ratio, 2 * f.order));
}

// Expands the cascade into one numerator/denominator pair and runs the
// direct-form difference equation.
std::vector<double> direct_form(const SosFilter& sos, const std::vector<double>& x) {
  std::vector<double> b{1.0}, a{1.0};
  auto mul = [](const std::vector<double>& p, const std::vector<double>& q) {
    std::vector<double> r(p.size() + q.size() - 1, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i)
      for (std::size_t j = 0; j < q.size(); ++j) r[i + j] += p[i] * q[j];
    return r;
  };
  for (const auto& s : sos) {
    b = mul(b, {s.b[0], s.b[1], s.b[2]});
    a = mul(a, {1.0, s.a[0], s.a[1]});
  }
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    double acc = 0.0;
    for (std::size_t k = 0; k < b.size() && k <= n; ++k) acc += b[k] * x[n - k];
    for (std::size_t k = 1; k < a.size() && k <= n; ++k) acc -= a[k] * y[n - k];
    y[n] = acc;
  }
  return y;
}

std::vector<double> sine(double hz, double seconds, double phase = 0.0) {
  std::vector<double> x(static_cast<std::size_t>(seconds * kFs));
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(2.0 * std::numbers::pi * hz * i / kFs + phase);
  return x;
}

double max_abs(std::span<const double> x, std::size_t from, std::size_t to) {
  double m = 0.0;
  for (std::size_t i = from; i < to; ++i) m = std::max(m, std::abs(x[i]));
  return m;
}

RawRecording recording_of(std::vector<double> samples) {
  RawRecording r;
  r.subject_id = "X";
  r.samples = std::move(samples);
  return r;
}

}  // namespace

TEST_CASE("designed magnitude matches the analog prototype through the bilinear map") {
  for (const FilterSpec f : {FilterSpec{}, FilterSpec{2, 5.0, 30.0, true}, FilterSpec{3, 1.0, 60.0, true}}) {
    const SosFilter sos = design_butterworth_bandpass(f, kFs);
    CHECK(sos.size() == static_cast<std::size_t>(f.order));
    for (double hz : {0.1, 0.5, 1.0, 3.0, 10.0, 25.0, 40.0, 60.0, 90.0})
      CHECK(magnitude_response(sos, hz, kFs) == doctest::Approx(butterworth_oracle(f, hz)).epsilon(1e-9));
    CHECK(magnitude_response(sos, f.low_cut_hz, kFs) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
    CHECK(magnitude_response(sos, f.high_cut_hz, kFs) == doctest::Approx(std::sqrt(0.5)).epsilon(1e-9));
  }
}

TEST_CASE("default band-pass: passband, DC and mains rejection") {
  const SosFilter sos = design_butterworth_bandpass(FilterSpec{}, kFs);
  const double g10 = magnitude_response(sos, 10.0, kFs);
  CHECK(g10 >= 0.95);
  CHECK(g10 <= 1.05);
  CHECK(20.0 * std::log10(magnitude_response(sos, 1e-6, kFs)) < -40.0);
  CHECK(magnitude_response(sos, 60.0, kFs) < 0.1);
}

TEST_CASE("sosfilt equals the expanded difference equation") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n01;
  std::vector<double> x(400);
  for (double& v : x) v = n01(rng);
  for (const FilterSpec f : {FilterSpec{2, 5.0, 30.0, false}, FilterSpec{}}) {
    const SosFilter sos = design_butterworth_bandpass(f, kFs);
    const auto y = sosfilt(sos, x);
    const auto ref = direct_form(sos, x);
    const double scale = max_abs(ref, 0, ref.size());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-8 * scale);
  }
}

TEST_CASE("impulse response stays below 1e-3 of its peak after the settle length") {
  const SosFilter sos = design_butterworth_bandpass(FilterSpec{}, kFs);
  const std::size_t settle = settle_length(sos);
  std::vector<double> impulse(settle * 2 + 1000, 0.0);
  impulse[0] = 1.0;
  const auto h = sosfilt(sos, impulse);
  const double peak = max_abs(h, 0, h.size());
  CHECK(std::abs(h[settle - 1]) > 1e-3 * peak);
  CHECK(max_abs(h, settle, h.size()) <= 1e-3 * peak);
}

TEST_CASE("bandpass_filter examples") {
  SUBCASE("constant input decays to zero") {
    const auto out = bandpass_filter(recording_of(std::vector<double>(4000, 5.0)), FilterSpec{});
    CHECK(out.samples.size() == 4000);
    CHECK(max_abs(out.samples, 2000, 4000) < 0.01);
  }
  SUBCASE("10 Hz passes, 60 Hz is rejected; single pass and zero phase") {
    for (bool zp : {false, true}) {
      FilterSpec f;
      f.zero_phase = zp;
      const auto a10 = bandpass_filter(recording_of(sine(10.0, 10.0)), f).samples;
      const auto a60 = bandpass_filter(recording_of(sine(60.0, 10.0)), f).samples;
      const double m10 = max_abs(a10, 800, 1200);
      CHECK(m10 >= 0.95);
      CHECK(m10 <= 1.05);
      CHECK(max_abs(a60, 800, 1200) < 0.1);
    }
  }
  SUBCASE("metadata is kept") {
    RawRecording r = recording_of(sine(5.0, 3.0));
    r.session = Session::S4;
    r.condition = Condition::stand;
    const auto out = bandpass_filter(r, FilterSpec{});
    CHECK(out.subject_id == "X");
    CHECK(out.session == Session::S4);
    CHECK(out.condition == Condition::stand);
    CHECK(out.samples.size() == r.samples.size());
  }
  SUBCASE("cutoffs at or beyond Nyquist are configuration errors") {
    CHECK_THROWS_AS(bandpass_filter(recording_of(sine(5.0, 3.0)), FilterSpec{4, 0.5, 100.0, true}), ConfigError);
    CHECK_THROWS_AS(bandpass_filter(recording_of(sine(5.0, 3.0)), FilterSpec{4, 40.0, 0.5, true}), ConfigError);
    CHECK_THROWS_AS(bandpass_filter(recording_of(sine(5.0, 3.0)), FilterSpec{0, 0.5, 40.0, true}), ConfigError);
  }
}

TEST_CASE("zero-phase filtering of a steady sine scales it by |H|^2 without delay") {
  const SosFilter sos = design_butterworth_bandpass(FilterSpec{}, kFs);
  for (double hz : {2.0, 10.0, 25.0}) {
    const auto x = sine(hz, 60.0, 0.3);
    const auto y = sosfiltfilt(sos, x);
    const double g = std::pow(butterworth_oracle(FilterSpec{}, hz), 2);
    double err = 0.0;
    for (std::size_t i = 5800; i < 6200; ++i) err = std::max(err, std::abs(y[i] - g * x[i]));
    CHECK(err < 1e-6);
  }
}

TEST_CASE("zero-phase output of a symmetric pulse is symmetric") {
  const SosFilter sos = design_butterworth_bandpass(FilterSpec{}, kFs);
  std::vector<double> x(2001, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::exp(-0.5 * std::pow((static_cast<double>(i) - 1000.0) / 6.0, 2));
  const auto y = sosfiltfilt(sos, x);
  const double peak = max_abs(y, 0, y.size());
  double err = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) err = std::max(err, std::abs(y[i] - y[y.size() - 1 - i]));
  CHECK(err < 1e-6 * peak);
}

TEST_CASE("filtering is linear") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> x(1500), y(1500), z(1500);
    for (double& v : x) v = n01(rng);
    for (double& v : y) v = n01(rng);
    const double a = n01(rng), b = n01(rng);
    for (std::size_t i = 0; i < z.size(); ++i) z[i] = a * x[i] + b * y[i];
    for (bool zp : {false, true}) {
      FilterSpec f;
      f.zero_phase = zp;
      const auto fx = bandpass_filter(recording_of(x), f).samples;
      const auto fy = bandpass_filter(recording_of(y), f).samples;
      const auto fz = bandpass_filter(recording_of(z), f).samples;
      const double scale = max_abs(fz, 0, fz.size());
      for (std::size_t i = 0; i < fz.size(); ++i) CHECK(std::abs(fz[i] - (a * fx[i] + b * fy[i])) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("linear_resample examples") {
  CHECK(linear_resample(std::vector<double>{0, 1}, 3) == std::vector<double>{0, 0.5, 1});
  CHECK(linear_resample(std::vector<double>{1, 2, 3, 4}, 4) == std::vector<double>{1, 2, 3, 4});
  CHECK(linear_resample(std::vector<double>{0, 2, 4}, 5) == std::vector<double>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(linear_resample(std::vector<double>{1, 2}, 1), std::invalid_argument);
  CHECK_THROWS_AS(linear_resample(std::vector<double>{1}, 4), std::invalid_argument);
}

TEST_CASE("linear_resample properties") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::uniform_int_distribution<int> len(2, 80);
  for (int trial = 0; trial < 200; ++trial) {
    const auto n = static_cast<std::size_t>(len(rng));
    std::vector<double> x(n);
    for (double& v : x) v = u(rng);
    // Identity and endpoints.
    CHECK(linear_resample(x, n) == x);
    const auto m = static_cast<std::size_t>(len(rng));
    const auto r = linear_resample(x, m);
    CHECK(r.size() == m);
    CHECK(r.front() == x.front());
    CHECK(r.back() == x.back());
    // Up to 2n - 1 keeps every original node, so the way back is exact.
    const auto back = linear_resample(linear_resample(x, 2 * n - 1), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(back[i] == doctest::Approx(x[i]).epsilon(1e-9));
    // An affine input survives any round trip, including through 2n.
    const double s = u(rng), c = u(rng);
    std::vector<double> line(n);
    for (std::size_t i = 0; i < n; ++i) line[i] = s * static_cast<double>(i) + c;
    const auto back2 = linear_resample(linear_resample(line, 2 * n), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(back2[i] - line[i]) < 1e-9);
  }
}

TEST_CASE("recording files round-trip") {
  RawRecording r = recording_of(sine(3.0, 2.0));
  r.subject_id = "T07";
  r.session = Session::S5;
  r.condition = Condition::tripod;
  const auto dir = std::filesystem::temp_directory_path() / "ecgid_rec_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / (recording_stem(r) + ".rec");
  write_recording(path, r);
  const auto back = read_recording(path);
  CHECK(back.subject_id == "T07");
  CHECK(back.session == Session::S5);
  CHECK(back.condition == Condition::tripod);
  CHECK(back.sample_rate_hz == 200.0);
  CHECK(back.samples == r.samples);
  CHECK(recording_stem(r) == "T07_S5_tripod");
  std::filesystem::remove_all(dir);
}
