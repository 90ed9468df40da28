#pragma once

#include "ecgid/beats.hpp"
#include "ecgid/synth.hpp"

#include <cmath>
#include <cstdlib>
#include <vector>

namespace ecgid::testing {

// A 110-sample beat at 200 Hz with an R spike at 35 and a Gaussian T bump at
// in-beat index `t_center`.
inline BeatTemplate gaussian_beat(double t_center, double t_width = 6.0, double t_amp = 0.4,
                                  const std::string& subject = "S") {
  BeatTemplate b;
  b.samples.assign(110, 0.0);
  for (int i = 0; i < 110; ++i) {
    const double x = static_cast<double>(i);
    b.samples[static_cast<std::size_t>(i)] = std::exp(-0.5 * std::pow((x - 35.0) / 2.0, 2)) +
                                              t_amp * std::exp(-0.5 * std::pow((x - t_center) / t_width, 2)) +
                                              0.1 * std::exp(-0.5 * std::pow((x - 10.0) / 4.0, 2));
  }
  b.heart_rate_bpm = 70.0;
  b.subject_id = subject;
  b.t_peak_rel_r = detect_t_peak(b);
  return b;
}

struct DetectionScore {
  std::size_t r_hit = 0, r_total = 0;
  std::size_t t_hit = 0, t_total = 0;
  double r_rate() const { return static_cast<double>(r_hit) / static_cast<double>(r_total); }
  double t_rate() const { return static_cast<double>(t_hit) / static_cast<double>(t_total); }
};

// R-peaks: a detection within +-2 samples of every generated R. T-peaks: each
// averaged beat against the mean generated T centre of the beats it averages.
inline DetectionScore score_detection(const std::vector<SynthRecording>& recordings, const FilterSpec& filter,
                                      const DetectionConfig& cfg) {
  DetectionScore s;
  for (const auto& r : recordings) {
    const double fs = r.recording.sample_rate_hz;
    const auto filtered = bandpass_filter(r.recording, filter);
    const auto peaks = detect_r_peaks(filtered);
    for (auto t : r.truth.r_index) {
      ++s.r_total;
      for (auto p : peaks)
        if (std::labs(static_cast<long>(p) - static_cast<long>(t)) <= 2) {
          ++s.r_hit;
          break;
        }
    }
    const auto beats = preprocess_recording(r.recording, filter, cfg);
    const auto w = static_cast<std::size_t>(cfg.averaging_window);
    for (const auto& b : beats) {
      const auto r_at = static_cast<long>(std::llround(b.source_time_s * fs)) + b.r_index;
      std::size_t k = 0;
      long best = -1;
      for (std::size_t i = 0; i < r.truth.r_index.size(); ++i) {
        const long d = std::labs(static_cast<long>(r.truth.r_index[i]) - r_at);
        if (best < 0 || d < best) {
          best = d;
          k = i;
        }
      }
      if (k + w > r.truth.r_index.size()) continue;
      double mean_ms = 0.0;
      for (std::size_t i = k; i < k + w; ++i) mean_ms += r.truth.t_center_ms[i];
      mean_ms /= static_cast<double>(w);
      const int truth = static_cast<int>(std::lround(mean_ms * fs / 1000.0));
      ++s.t_total;
      if (std::abs(b.t_peak_rel_r - truth) <= 2) ++s.t_hit;
    }
  }
  return s;
}

}  // namespace ecgid::testing
