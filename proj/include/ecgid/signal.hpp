#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ecgid {

// Thrown when a configuration value violates its documented constraint.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Collects non-fatal conditions (short recordings, skipped beats, ...).
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

inline void warn(Diagnostics* diag, std::string msg) {
  if (diag) diag->warn(std::move(msg));
}

enum class Session { S1 = 1, S2, S3, S4, S5, S6 };
enum class Condition { sit, stand, exercise, supine, tripod };

std::string_view to_string(Session s);
std::string_view to_string(Condition c);
Session parse_session(std::string_view text);
Condition parse_condition(std::string_view text);

struct RawRecording {
  std::string subject_id;
  Session session = Session::S1;
  Condition condition = Condition::sit;
  double sample_rate_hz = 200.0;
  std::vector<double> samples;

  double duration_s() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  // Throws std::invalid_argument on empty samples or non-positive rate.
  void validate() const;
};

struct FilterSpec {
  int order = 4;
  double low_cut_hz = 0.5;
  double high_cut_hz = 40.0;
  bool zero_phase = true;

  void validate(double sample_rate_hz) const;
};

// One biquad, b0 + b1 z^-1 + b2 z^-2 over 1 + a1 z^-1 + a2 z^-2.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};
};

using SosFilter = std::vector<Biquad>;

// Digital Butterworth band-pass of the given prototype order, realized as
// cascaded second-order sections (2*order poles in total). Bilinear transform
// with pre-warped band edges. Each section is normalized to unit gain at the
// digital centre frequency, so the cascade has gain 1 there.
//
// A single pass has -3 dB points at low_cut_hz and high_cut_hz. Zero-phase
// application squares the magnitude: the band edges become -6 dB points and
// the roll-off is that of a filter of twice the order.
SosFilter design_butterworth_bandpass(const FilterSpec& spec, double sample_rate_hz);

// |H(e^{jw})| of one pass of the cascade at frequency_hz.
double magnitude_response(const SosFilter& sos, double frequency_hz, double sample_rate_hz);

// Number of samples after which the cascade's impulse response stays below
// 1e-3 of its peak magnitude.
std::size_t settle_length(const SosFilter& sos, std::size_t max_samples = 200000);

// Causal single pass (transposed direct form II), zero initial state.
std::vector<double> sosfilt(const SosFilter& sos, std::span<const double> x);

// Forward-backward application. The input is extended on both ends by odd
// reflection of min(3 * settle_length, n - 1) samples, and each pass starts
// from the step-response steady state scaled by its first sample.
std::vector<double> sosfiltfilt(const SosFilter& sos, std::span<const double> x);

// Band-pass the recording. Output keeps length and metadata.
RawRecording bandpass_filter(const RawRecording& rec, const FilterSpec& spec);

// Linear interpolation of `segment` onto target_len points spanning the same
// index range. Endpoints are copied exactly.
std::vector<double> linear_resample(std::span<const double> segment, std::size_t target_len);

}  // namespace ecgid
