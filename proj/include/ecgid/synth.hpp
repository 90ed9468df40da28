#pragma once

#include "ecgid/signal.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace ecgid {

// One Gaussian bump: amplitude, centre relative to R (ms), standard deviation (ms).
struct Wave {
  double amplitude = 0.0;
  double center_ms = 0.0;
  double width_ms = 10.0;
};

enum WaveIndex { kP = 0, kQ = 1, kR = 2, kS = 3, kT = 4 };

struct SubjectParams {
  std::string subject_id;
  std::array<Wave, 5> waves;  // P, Q, R, S, T; the T centre is derived from the heart rate
  double t_slope_ms_per_bpm = -1.2;
  double t_offset_ms = 320.0;  // T centre at 60 bpm
  double hr_rest_lo = 62.0;
  double hr_rest_hi = 72.0;
  double hr_active_lo = 130.0;
  double hr_active_hi = 150.0;
  std::uint64_t rng_seed = 0;

  double t_center_ms(double heart_rate_bpm) const {
    return t_offset_ms + t_slope_ms_per_bpm * (heart_rate_bpm - 60.0);
  }
  // ConfigError on a non-dominant R, a non-negative slope, a resting T centre
  // outside [75, 375] ms or empty heart-rate ranges.
  void validate() const;
};

struct GroundTruth {
  std::vector<std::size_t> r_index;
  std::vector<double> r_time_s;
  std::vector<double> t_center_ms;
  std::vector<double> heart_rate_bpm;  // from the preceding RR interval
};

struct SynthRecording {
  RawRecording recording;
  GroundTruth truth;
  std::vector<double> clean;  // noise-free signal, kept for SNR checks
};

// Heart-rate level of a rest condition relative to sitting.
double condition_hr_shift(Condition c);

// Heart rate at time t of an exercise recovery starting at `active`:
// rest_top + (active - rest_top) exp(-t / 40 s).
double recovery_heart_rate(double active, double rest_top, double t_s);
inline constexpr double kRecoveryTimeConstantS = 40.0;

// Gaussian-bump beat train with additive white noise at `snr_db` relative to
// the clean signal's mean square (infinity disables noise). Rest conditions
// hold a constant heart rate drawn from the subject's rest range; exercise
// decays from the active range toward the top of the rest range.
SynthRecording generate_recording(const SubjectParams& params, Session session, Condition condition,
                                  double duration_s, double snr_db, std::uint64_t seed,
                                  double sample_rate_hz = 200.0);

// Draws subject parameters; subjects are redrawn until every pair is at least
// `min_distance` apart in normalized parameter space and their noise-free
// rest templates correlate below kMaxTemplateCorrelation.
inline constexpr double kMaxTemplateCorrelation = 0.98;
std::vector<SubjectParams> draw_subjects(int n, const std::string& prefix, std::uint64_t seed,
                                         double min_distance = 2.0);

struct CorpusPlan {
  int target_subjects = 20;
  int auxiliary_subjects = 0;
  double rest_duration_s = 30.0;
  double exercise_duration_s = 120.0;
  double snr_db = 20.0;
  std::uint64_t seed = 7;
  double min_distance = 2.0;

  void validate() const;
};

struct SynthCorpus {
  std::vector<SubjectParams> subjects;
  std::vector<SynthRecording> recordings;
};

// Target subjects get every split session (S1 sit; S2, S4, S6 sit and stand
// analogs; S3 sit and exercise; S5 supine and tripod). Auxiliary subjects get
// S2 sit/stand and S3 sit/exercise only.
SynthCorpus generate_corpus(const CorpusPlan& plan);

// Recording files plus `<stem>.truth.csv` sidecars
// (r_index,r_time_s,t_center_ms,heart_rate_bpm) and subjects.csv.
void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus);
GroundTruth read_ground_truth(const std::filesystem::path& path);

// Measured SNR (dB) of clean vs noisy.
double measured_snr_db(std::span<const double> clean, std::span<const double> noisy);

}  // namespace ecgid
