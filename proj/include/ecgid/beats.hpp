#pragma once

#include "ecgid/signal.hpp"

#include <cstddef>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ecgid {

// Sample offsets of a 550 ms beat (175 ms pre-R, 375 ms post-R) at a given rate.
struct BeatGeometry {
  int length = 110;
  int r_index = 35;
  int t_window_start = 50;  // start of the last 300 ms
  int st_split = 50;        // 250 ms: PQRS | ST boundary used for augmentation

  static BeatGeometry for_rate(double sample_rate_hz);
  // Lowest T-peak offset relative to R that lies inside the search window.
  int min_t_rel_r() const { return t_window_start - r_index; }
  int max_t_rel_r() const { return length - r_index; }  // exclusive
};

struct BeatTemplate {
  std::vector<double> samples;
  int r_index = 35;
  double heart_rate_bpm = 0.0;
  int t_peak_rel_r = -1;  // -1 until detect_t_peak
  std::string subject_id;
  Session session = Session::S1;
  Condition condition = Condition::sit;
  double source_time_s = 0.0;
  double sample_rate_hz = 200.0;
  bool augmented = false;

  BeatGeometry geometry() const { return BeatGeometry::for_rate(sample_rate_hz); }
  // Length, R anchor, HR > 0 and (when set) the T-peak window.
  bool satisfies_invariants() const;
};

struct DetectionConfig {
  int averaging_window = 10;
  double zscore_threshold = 3.0;
  double iqr_factor = 1.5;
  bool per_subject_tpeak_pooling = false;

  void validate() const;
};

// Pan-Tompkins style detector on an already band-passed recording:
// centred 5-point derivative, squaring, 150 ms moving-window integration,
// dual adaptive thresholds with RR search-back, then refinement onto the
// signal maximum and a 200 ms refractory rule. Recordings under 1 s yield
// no peaks and a warning.
std::vector<std::size_t> detect_r_peaks(const RawRecording& rec, Diagnostics* diag = nullptr);

// Quantile with linear interpolation between order statistics (type 7).
// `sorted` must be ascending and non-empty.
double quantile_linear(std::span<const double> sorted, double q);

// Keeps peaks whose amplitude is within [Q1 - f*IQR, Q3 + f*IQR]. Fewer than
// four peaks pass through unchanged.
std::vector<std::size_t> remove_amplitude_outliers(std::span<const std::size_t> peaks, const RawRecording& rec,
                                                   double iqr_factor);

// HR_i = 60 fs / (p_i - p_{i-1}); the first peak copies the second's value.
std::vector<double> compute_heart_rates(std::span<const std::size_t> peaks, double sample_rate_hz);

struct SegmentResult {
  std::vector<BeatTemplate> beats;
  std::size_t dropped = 0;  // peaks without full 550 ms context
};

SegmentResult segment_beats(const RawRecording& rec, std::span<const std::size_t> peaks,
                            std::span<const double> heart_rates);

// Stride-1 sliding mean over W consecutive beats. Each output keeps the
// metadata and onset time of its first constituent and the mean HR.
// Averaging W beats with independent noise improves SNR by about sqrt(W).
std::vector<BeatTemplate> average_beats(std::span<const BeatTemplate> beats, int window, Diagnostics* diag = nullptr);

// Argmax over the last 300 ms, relative to R. Ties go to the earlier index.
int detect_t_peak(const BeatTemplate& beat);

struct TPeakStats {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

// Statistics of t_peak_rel_r; nullopt (and a warning) under 10 beats.
std::optional<TPeakStats> tpeak_stats(std::span<const BeatTemplate> beats, Diagnostics* diag = nullptr);

// Drops beats with |z| > threshold against `stats`. No-op for missing stats
// or zero spread.
std::vector<BeatTemplate> gate_t_peaks(std::vector<BeatTemplate> beats, const std::optional<TPeakStats>& stats,
                                       double threshold);

// Single-pass gating of each group against its own statistics.
std::vector<std::vector<BeatTemplate>> zscore_gate_t_peaks(std::vector<std::vector<BeatTemplate>> groups,
                                                           double threshold, Diagnostics* diag = nullptr);

struct PreprocessCounts {
  std::size_t detected = 0;
  std::size_t after_iqr = 0;
  std::size_t dropped_at_edges = 0;
  std::size_t emitted = 0;
};

// filter -> R-peaks -> IQR gate -> heart rate -> segment -> average -> T-peak.
std::vector<BeatTemplate> preprocess_recording(const RawRecording& rec, const FilterSpec& filter,
                                               const DetectionConfig& cfg, Diagnostics* diag = nullptr,
                                               PreprocessCounts* counts = nullptr);

bool is_training_session(Session s);

// Corpus-level T-peak gate. Rest-state beats (everything except exercise)
// are gated against statistics of the rest-state training beats (sessions
// S1/S2/S4/S6, sit/stand), pooled over all subjects or per subject.
// Exercise beats are gated against statistics of the auxiliary subjects'
// exercise beats.
std::vector<BeatTemplate> gate_corpus_t_peaks(std::vector<BeatTemplate> beats,
                                              const std::set<std::string>& auxiliary_subjects,
                                              const DetectionConfig& cfg, Diagnostics* diag = nullptr);

}  // namespace ecgid
