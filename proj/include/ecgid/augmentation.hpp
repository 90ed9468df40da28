#pragma once

#include "ecgid/beats.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ecgid {

enum class FitKind { balanced, unbalanced, global };

std::string_view to_string(FitKind k);
FitKind parse_fit_kind(std::string_view text);

// t_peak_rel_r ~= slope * HR + intercept, in samples and bpm.
struct SubjectFit {
  std::string subject_id;
  double slope = 0.0;
  double intercept = 0.0;
  FitKind kind = FitKind::unbalanced;
  bool degenerate = false;

  double at(double heart_rate_bpm) const { return slope * heart_rate_bpm + intercept; }
};

struct AugmentationRange {
  std::string subject_id;
  int t_min = 0;
  int t_max = 0;

  int size() const { return t_max >= t_min ? t_max - t_min + 1 : 0; }
};

struct AugmentationConstants {
  double hr_limit = 140.0;  // bpm
  int t_global_min = 29;    // T-peak of the population fit at hr_limit
  int t_physio_min = 25;    // physiological floor
  int t_cap = 73;           // keeps two samples after the T-peak inside a 110-sample beat
  bool median_over_all_beats = false;

  void validate() const;
};

// Weighted least squares of T-peak location on heart rate over a subject's
// sit and stand training beats. Unbalanced weights every beat equally;
// balanced gives sit and stand the same total weight. Fewer than two distinct
// heart rates marks the fit degenerate.
SubjectFit fit_tpeak_vs_hr(std::span<const BeatTemplate> beats, FitKind weighting);

// Least-squares line through weighted points; the building block of the fits.
SubjectFit weighted_line_fit(std::span<const double> hr, std::span<const double> tpeak,
                             std::span<const double> weights);

// Per-subject range selection. The lower limit is whichever of the balanced
// and unbalanced predictions at hr_limit is closer to the global value (ties
// prefer balanced), floored at t_physio_min. Degenerate fits predict the
// global value. The upper limit is the median of the standing T-peaks (or of
// `all_tpeaks` when there are none or median_over_all_beats is set), capped
// at t_cap and never below the lower limit.
AugmentationRange select_range(const SubjectFit& balanced, const SubjectFit& unbalanced,
                               const AugmentationConstants& consts, std::span<const int> standing_tpeaks,
                               std::span<const int> all_tpeaks, Diagnostics* diag = nullptr);

// Median with the mean of the middle pair for even counts.
double median(std::vector<double> values);

// Resamples the ST part (in-beat [st_split, end)) so that the T-peak moves to
// t_new (relative to R). The part is rescaled about its first sample and
// re-fit to its original length by truncation or edge padding; the PQRS part
// is copied unchanged. Returns nullopt when the scale leaves [0.3, 3] or the
// current T-peak is not strictly inside the ST part.
std::optional<BeatTemplate> augment_beat(const BeatTemplate& beat, int t_new);

struct AugmentResult {
  std::vector<BeatTemplate> beats;  // originals first, then augmented
  std::size_t skipped = 0;
};

// Thinning of the augmented set: only every source_stride-th beat is used as
// a source and only every t_step-th T-peak of the range is generated.
struct AugmentOptions {
  int source_stride = 1;
  int t_step = 1;

  void validate() const;
};

// Originals plus one augmented copy per integer T-peak in the range.
AugmentResult augment_subject(std::span<const BeatTemplate> beats, const AugmentationRange& range,
                              const AugmentOptions& options = {});

// Moves every beat's T-peak to round(fit(mean_train_hr)), clamped to the
// representable window. Beats whose rescale is implausible are dropped.
std::vector<BeatTemplate> normalize_st_duration(std::span<const BeatTemplate> beats, const SubjectFit& fit,
                                                double mean_train_hr, Diagnostics* diag = nullptr);

// Global fit over pooled beats (all subjects); T-peak at hr_limit, rounded.
int refit_global_min(std::span<const BeatTemplate> pooled_training_beats, const AugmentationConstants& consts);

struct SubjectRanges {
  std::vector<SubjectFit> fits;  // balanced and unbalanced per subject
  std::vector<AugmentationRange> ranges;
};

// Fits and ranges for every subject with sit/stand beats in `training_beats`.
SubjectRanges compute_subject_ranges(std::span<const BeatTemplate> training_beats,
                                     const AugmentationConstants& consts, Diagnostics* diag = nullptr);

// `subject_id,kind,slope,intercept` and `subject_id,t_min,t_max` tables.
void write_fits(const std::filesystem::path& path, const std::vector<SubjectFit>& fits);
std::vector<SubjectFit> read_fits(const std::filesystem::path& path);
void write_ranges(const std::filesystem::path& path, const std::vector<AugmentationRange>& ranges);
std::vector<AugmentationRange> read_ranges(const std::filesystem::path& path);

}  // namespace ecgid
