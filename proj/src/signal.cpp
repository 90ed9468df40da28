#include "ecgid/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace ecgid {

namespace {

constexpr std::array<std::string_view, 6> kSessionNames{"S1", "S2", "S3", "S4", "S5", "S6"};
constexpr std::array<std::string_view, 5> kConditionNames{"sit", "stand", "exercise", "supine", "tripod"};

using cplx = std::complex<double>;

}  // namespace

std::string_view to_string(Session s) { return kSessionNames[static_cast<int>(s) - 1]; }
std::string_view to_string(Condition c) { return kConditionNames[static_cast<int>(c)]; }

Session parse_session(std::string_view text) {
  for (std::size_t i = 0; i < kSessionNames.size(); ++i)
    if (kSessionNames[i] == text) return static_cast<Session>(i + 1);
  throw std::invalid_argument("unknown session '" + std::string(text) + "'");
}

Condition parse_condition(std::string_view text) {
  for (std::size_t i = 0; i < kConditionNames.size(); ++i)
    if (kConditionNames[i] == text) return static_cast<Condition>(i);
  throw std::invalid_argument("unknown condition '" + std::string(text) + "'");
}

void RawRecording::validate() const {
  if (samples.empty()) throw std::invalid_argument("recording " + subject_id + ": no samples");
  if (!(sample_rate_hz > 0.0)) throw std::invalid_argument("recording " + subject_id + ": sample rate must be > 0");
}

void FilterSpec::validate(double sample_rate_hz) const {
  if (order < 1) throw ConfigError("filter.order must be a positive integer");
  if (!(low_cut_hz > 0.0)) throw ConfigError("filter.low_cut_hz must be > 0");
  if (!(high_cut_hz > low_cut_hz)) throw ConfigError("filter.high_cut_hz must exceed filter.low_cut_hz");
  if (!(high_cut_hz < sample_rate_hz / 2.0)) {
    std::ostringstream os;
    os << "filter.high_cut_hz must be below Nyquist (" << sample_rate_hz / 2.0 << " Hz)";
    throw ConfigError(os.str());
  }
}

SosFilter design_butterworth_bandpass(const FilterSpec& spec, double sample_rate_hz) {
  spec.validate(sample_rate_hz);
  const double fs2 = 2.0 * sample_rate_hz;
  const double w_lo = fs2 * std::tan(std::numbers::pi * spec.low_cut_hz / sample_rate_hz);
  const double w_hi = fs2 * std::tan(std::numbers::pi * spec.high_cut_hz / sample_rate_hz);
  const double bw = w_hi - w_lo;
  const double w0 = std::sqrt(w_lo * w_hi);

  // Analog low-pass prototype -> band-pass -> bilinear.
  std::vector<cplx> complex_poles;
  std::vector<double> real_poles;
  const int n = spec.order;
  for (int k = 1; k <= n; ++k) {
    const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n - 1) / (2.0 * n));
    const cplx pl = p * bw / 2.0;
    const cplx d = std::sqrt(pl * pl - w0 * w0);
    for (const cplx s : {pl + d, pl - d}) {
      const cplx z = (fs2 + s) / (fs2 - s);
      if (z.imag() > 1e-12)
        complex_poles.push_back(z);
      else if (std::abs(z.imag()) <= 1e-12)
        real_poles.push_back(z.real());
    }
  }
  std::sort(real_poles.begin(), real_poles.end());

  SosFilter sos;
  for (const cplx& p : complex_poles) {
    Biquad q;
    q.b = {1.0, 0.0, -1.0};
    q.a = {-2.0 * p.real(), std::norm(p)};
    sos.push_back(q);
  }
  for (std::size_t i = 0; i + 1 < real_poles.size(); i += 2) {
    Biquad q;
    q.b = {1.0, 0.0, -1.0};
    q.a = {-(real_poles[i] + real_poles[i + 1]), real_poles[i] * real_poles[i + 1]};
    sos.push_back(q);
  }

  // Unit gain per section at the digital image of the analog centre.
  const double omega0 = 2.0 * std::atan(w0 / fs2);
  const double f0 = omega0 * sample_rate_hz / (2.0 * std::numbers::pi);
  for (Biquad& q : sos) {
    const double g = magnitude_response(SosFilter{q}, f0, sample_rate_hz);
    for (double& b : q.b) b /= g;
  }
  return sos;
}

double magnitude_response(const SosFilter& sos, double frequency_hz, double sample_rate_hz) {
  const double w = 2.0 * std::numbers::pi * frequency_hz / sample_rate_hz;
  const cplx z1 = std::polar(1.0, -w);
  const cplx z2 = z1 * z1;
  double mag = 1.0;
  for (const Biquad& q : sos) {
    const cplx num = q.b[0] + q.b[1] * z1 + q.b[2] * z2;
    const cplx den = 1.0 + q.a[0] * z1 + q.a[1] * z2;
    mag *= std::abs(num / den);
  }
  return mag;
}

std::vector<double> sosfilt(const SosFilter& sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const Biquad& q : sos) {
    double z1 = 0.0, z2 = 0.0;
    for (double& v : y) {
      const double in = v;
      const double out = q.b[0] * in + z1;
      z1 = q.b[1] * in - q.a[0] * out + z2;
      z2 = q.b[2] * in - q.a[1] * out;
      v = out;
    }
  }
  return y;
}

std::size_t settle_length(const SosFilter& sos, std::size_t max_samples) {
  // Impulse response computed sample by sample; once it has stayed below the
  // threshold for a long quiet stretch and the states have died out, stop.
  constexpr std::size_t kQuiet = 20000;
  std::vector<std::array<double, 2>> z(sos.size(), {0.0, 0.0});
  double peak = 0.0;
  std::vector<double> h;
  std::size_t last = 0;
  for (std::size_t i = 0; i < max_samples; ++i) {
    double v = i == 0 ? 1.0 : 0.0;
    double state = 0.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
      const Biquad& q = sos[s];
      const double out = q.b[0] * v + z[s][0];
      z[s][0] = q.b[1] * v - q.a[0] * out + z[s][1];
      z[s][1] = q.b[2] * v - q.a[1] * out;
      v = out;
      state = std::max({state, std::abs(z[s][0]), std::abs(z[s][1])});
    }
    h.push_back(v);
    peak = std::max(peak, std::abs(v));
    if (std::abs(v) > 1e-3 * peak) last = i;
    if (i > last + kQuiet && state < 1e-9 * peak) break;
  }
  last = 0;
  for (std::size_t i = 0; i < h.size(); ++i)
    if (std::abs(h[i]) > 1e-3 * peak) last = i;
  return last + 1;
}

namespace {

// Filter with each section's state preset to the steady state of a step of
// height `level` at its input.
void sosfilt_steady(const SosFilter& sos, std::vector<double>& y, double level) {
  double u = level;
  for (const Biquad& q : sos) {
    const double gain = (q.b[0] + q.b[1] + q.b[2]) / (1.0 + q.a[0] + q.a[1]);
    const double out_ss = gain * u;
    double z2 = q.b[2] * u - q.a[1] * out_ss;
    double z1 = out_ss - q.b[0] * u;
    for (double& v : y) {
      const double in = v;
      const double out = q.b[0] * in + z1;
      z1 = q.b[1] * in - q.a[0] * out + z2;
      z2 = q.b[2] * in - q.a[1] * out;
      v = out;
    }
    u = out_ss;
  }
}

}  // namespace

std::vector<double> sosfiltfilt(const SosFilter& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = std::min(3 * settle_length(sos), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  sosfilt_steady(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  sosfilt_steady(sos, ext, ext.front());
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

RawRecording bandpass_filter(const RawRecording& rec, const FilterSpec& spec) {
  rec.validate();
  const SosFilter sos = design_butterworth_bandpass(spec, rec.sample_rate_hz);
  RawRecording out = rec;
  out.samples = spec.zero_phase ? sosfiltfilt(sos, rec.samples) : sosfilt(sos, rec.samples);
  return out;
}

std::vector<double> linear_resample(std::span<const double> segment, std::size_t target_len) {
  if (segment.size() < 2) throw std::invalid_argument("linear_resample: segment needs at least 2 samples");
  if (target_len < 2) throw std::invalid_argument("linear_resample: target_len must be >= 2");
  const std::size_t n = segment.size();
  std::vector<double> out(target_len);
  const double span = static_cast<double>(n - 1);
  const double denom = static_cast<double>(target_len - 1);
  for (std::size_t i = 0; i + 1 < target_len; ++i) {
    const double pos = static_cast<double>(i) * span / denom;
    const auto i0 = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(i0);
    out[i] = frac == 0.0 ? segment[i0] : segment[i0] + frac * (segment[i0 + 1] - segment[i0]);
  }
  out.back() = segment.back();
  return out;
}

}  // namespace ecgid
