#include "ecgid/augmentation.hpp"

#include "ecgid/recording_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ecgid {

namespace fs = std::filesystem;

std::string_view to_string(FitKind k) {
  switch (k) {
    case FitKind::balanced: return "balanced";
    case FitKind::unbalanced: return "unbalanced";
    case FitKind::global: return "global";
  }
  return "?";
}

FitKind parse_fit_kind(std::string_view text) {
  if (text == "balanced") return FitKind::balanced;
  if (text == "unbalanced") return FitKind::unbalanced;
  if (text == "global") return FitKind::global;
  throw std::invalid_argument("unknown fit kind '" + std::string(text) + "'");
}

void AugmentationConstants::validate() const {
  if (!(hr_limit > 0.0)) throw ConfigError("augmentation.hr_limit must be > 0");
  if (t_physio_min > t_global_min) throw ConfigError("augmentation.t_physio_min must not exceed t_global_min");
  if (t_physio_min < 16) throw ConfigError("augmentation.t_physio_min must lie inside the ST part (>= 16)");
  if (t_cap < t_physio_min || t_cap > 73) throw ConfigError("augmentation.t_cap must lie in [t_physio_min, 73]");
}

SubjectFit weighted_line_fit(std::span<const double> hr, std::span<const double> tpeak,
                             std::span<const double> weights) {
  if (hr.size() != tpeak.size() || hr.size() != weights.size())
    throw std::invalid_argument("weighted_line_fit: input lengths differ");
  SubjectFit fit;
  const std::set<double> distinct(hr.begin(), hr.end());
  double w_sum = 0.0, x_mean = 0.0, y_mean = 0.0;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    w_sum += weights[i];
    x_mean += weights[i] * hr[i];
    y_mean += weights[i] * tpeak[i];
  }
  if (distinct.size() < 2 || !(w_sum > 0.0)) {
    fit.degenerate = true;
    fit.slope = fit.intercept = std::nan("");
    return fit;
  }
  x_mean /= w_sum;
  y_mean /= w_sum;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < hr.size(); ++i) {
    sxx += weights[i] * (hr[i] - x_mean) * (hr[i] - x_mean);
    sxy += weights[i] * (hr[i] - x_mean) * (tpeak[i] - y_mean);
  }
  if (!(sxx > 1e-12 * w_sum)) {
    fit.degenerate = true;
    fit.slope = fit.intercept = std::nan("");
    return fit;
  }
  fit.slope = sxy / sxx;
  fit.intercept = y_mean - fit.slope * x_mean;
  return fit;
}

SubjectFit fit_tpeak_vs_hr(std::span<const BeatTemplate> beats, FitKind weighting) {
  std::size_t n_sit = 0, n_stand = 0;
  for (const auto& b : beats) {
    if (b.condition == Condition::sit) ++n_sit;
    if (b.condition == Condition::stand) ++n_stand;
  }
  std::vector<double> hr, tp, w;
  for (const auto& b : beats) {
    if (b.condition != Condition::sit && b.condition != Condition::stand) continue;
    hr.push_back(b.heart_rate_bpm);
    tp.push_back(b.t_peak_rel_r);
    if (weighting == FitKind::balanced)
      w.push_back(1.0 / static_cast<double>(b.condition == Condition::sit ? n_sit : n_stand));
    else
      w.push_back(1.0);
  }
  SubjectFit fit = weighted_line_fit(hr, tp, w);
  fit.kind = weighting;
  if (!beats.empty()) fit.subject_id = beats.front().subject_id;
  return fit;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

AugmentationRange select_range(const SubjectFit& balanced, const SubjectFit& unbalanced,
                               const AugmentationConstants& consts, std::span<const int> standing_tpeaks,
                               std::span<const int> all_tpeaks, Diagnostics* diag) {
  const double t_global = consts.t_global_min;
  const double t_b = balanced.degenerate ? t_global : balanced.at(consts.hr_limit);
  const double t_ub = unbalanced.degenerate ? t_global : unbalanced.at(consts.hr_limit);
  const double chosen = (t_b - t_global) * (t_b - t_global) <= (t_ub - t_global) * (t_ub - t_global) ? t_b : t_ub;

  AugmentationRange range;
  range.subject_id = !balanced.subject_id.empty() ? balanced.subject_id : unbalanced.subject_id;
  range.t_min = std::clamp(static_cast<int>(std::lround(chosen)), consts.t_physio_min, consts.t_cap);

  std::span<const int> source = standing_tpeaks;
  if (consts.median_over_all_beats || standing_tpeaks.empty()) {
    if (!consts.median_over_all_beats)
      warn(diag, "select_range: " + range.subject_id + " has no standing beats; using all training T-peaks");
    source = all_tpeaks;
  }
  if (source.empty()) {
    warn(diag, "select_range: " + range.subject_id + " has no T-peaks; range collapses to its lower limit");
    range.t_max = range.t_min;
    return range;
  }
  const double med = median(std::vector<double>(source.begin(), source.end()));
  range.t_max = std::clamp(static_cast<int>(std::lround(med)), range.t_min, consts.t_cap);
  return range;
}

std::optional<BeatTemplate> augment_beat(const BeatTemplate& beat, int t_new) {
  const BeatGeometry g = beat.geometry();
  if (static_cast<int>(beat.samples.size()) != g.length)
    throw std::invalid_argument("augment_beat: beat length does not match its sample rate");
  const int t_old = beat.t_peak_rel_r >= 0 ? beat.t_peak_rel_r : detect_t_peak(beat);
  const int origin = g.st_split - g.r_index;  // ST part start relative to R
  const int d_old = t_old - origin;
  const int d_new = t_new - origin;
  if (d_old <= 0 || d_new <= 0) return std::nullopt;
  const double scale = static_cast<double>(d_new) / static_cast<double>(d_old);
  if (scale < 0.3 || scale > 3.0) return std::nullopt;

  const std::size_t st_len = static_cast<std::size_t>(g.length - g.st_split);
  const std::span<const double> st(beat.samples.data() + g.st_split, st_len);
  BeatTemplate out = beat;
  if (d_new != d_old) {
    const auto target = static_cast<std::size_t>(std::lround(static_cast<double>(st_len - 1) * scale)) + 1;
    std::vector<double> res = linear_resample(st, target);
    res.resize(st_len, res.back());
    std::copy(res.begin(), res.end(), out.samples.begin() + g.st_split);
  }
  out.t_peak_rel_r = t_new;
  out.augmented = true;
  return out;
}

void AugmentOptions::validate() const {
  if (source_stride < 1) throw ConfigError("augmentation.source_stride must be at least 1");
  if (t_step < 1) throw ConfigError("augmentation.t_step must be at least 1");
}

AugmentResult augment_subject(std::span<const BeatTemplate> beats, const AugmentationRange& range,
                              const AugmentOptions& options) {
  options.validate();
  AugmentResult res;
  res.beats.assign(beats.begin(), beats.end());
  for (std::size_t i = 0; i < beats.size(); i += static_cast<std::size_t>(options.source_stride)) {
    const auto& b = beats[i];
    for (int t = range.t_min; t <= range.t_max; t += options.t_step) {
      if (auto a = augment_beat(b, t))
        res.beats.push_back(std::move(*a));
      else
        ++res.skipped;
    }
  }
  return res;
}

std::vector<BeatTemplate> normalize_st_duration(std::span<const BeatTemplate> beats, const SubjectFit& fit,
                                                double mean_train_hr, Diagnostics* diag) {
  if (fit.degenerate) throw std::invalid_argument("normalize_st_duration: degenerate fit for " + fit.subject_id);
  std::vector<BeatTemplate> out;
  if (beats.empty()) return out;
  const BeatGeometry g = beats.front().geometry();
  const int lo = g.st_split - g.r_index + 1;
  const int hi = g.length - g.r_index - 2;
  const long raw = std::lround(fit.at(mean_train_hr));
  const int target = static_cast<int>(std::clamp<long>(raw, lo, hi));
  if (target != raw) warn(diag, "normalize_st_duration: target T-peak clamped to " + std::to_string(target));
  std::size_t dropped = 0;
  for (const auto& b : beats) {
    if (b.t_peak_rel_r == target) {
      out.push_back(b);
      continue;
    }
    if (auto a = augment_beat(b, target)) {
      a->augmented = b.augmented;
      out.push_back(std::move(*a));
    } else {
      ++dropped;
    }
  }
  if (dropped) warn(diag, "normalize_st_duration: dropped " + std::to_string(dropped) + " implausible beats");
  return out;
}

int refit_global_min(std::span<const BeatTemplate> pooled, const AugmentationConstants& consts) {
  const SubjectFit fit = fit_tpeak_vs_hr(pooled, FitKind::unbalanced);
  if (fit.degenerate) throw std::runtime_error("refit_global_min: pooled data has no heart-rate spread");
  return static_cast<int>(std::lround(fit.at(consts.hr_limit)));
}

SubjectRanges compute_subject_ranges(std::span<const BeatTemplate> training_beats,
                                     const AugmentationConstants& consts, Diagnostics* diag) {
  consts.validate();
  std::map<std::string, std::vector<BeatTemplate>> by_subject;
  for (const auto& b : training_beats)
    if (!b.augmented && (b.condition == Condition::sit || b.condition == Condition::stand))
      by_subject[b.subject_id].push_back(b);

  SubjectRanges out;
  for (const auto& [id, beats] : by_subject) {
    SubjectFit bal = fit_tpeak_vs_hr(beats, FitKind::balanced);
    SubjectFit unbal = fit_tpeak_vs_hr(beats, FitKind::unbalanced);
    bal.subject_id = unbal.subject_id = id;
    if (bal.degenerate || unbal.degenerate) warn(diag, "fit for " + id + " is degenerate; using the global value");
    std::vector<int> standing, all;
    for (const auto& b : beats) {
      all.push_back(b.t_peak_rel_r);
      if (b.condition == Condition::stand) standing.push_back(b.t_peak_rel_r);
    }
    out.ranges.push_back(select_range(bal, unbal, consts, standing, all, diag));
    out.fits.push_back(std::move(bal));
    out.fits.push_back(std::move(unbal));
  }
  return out;
}

namespace {

std::vector<std::vector<std::string>> read_table(const fs::path& path, std::string_view expected_header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != expected_header)
    throw std::runtime_error(path.string() + ": expected header '" + std::string(expected_header) + "'");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> row;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) row.push_back(f);
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_fits(const fs::path& path, const std::vector<SubjectFit>& fits) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "subject_id,kind,slope,intercept\n";
  for (const auto& f : fits)
    out << f.subject_id << ',' << to_string(f.kind) << ',' << format_double(f.slope) << ','
        << format_double(f.intercept) << '\n';
}

std::vector<SubjectFit> read_fits(const fs::path& path) {
  std::vector<SubjectFit> fits;
  for (const auto& row : read_table(path, "subject_id,kind,slope,intercept")) {
    if (row.size() != 4) throw std::runtime_error(path.string() + ": malformed fit row");
    SubjectFit f;
    f.subject_id = row[0];
    f.kind = parse_fit_kind(row[1]);
    f.slope = parse_double(row[2]);
    f.intercept = parse_double(row[3]);
    f.degenerate = std::isnan(f.slope) || std::isnan(f.intercept);
    fits.push_back(std::move(f));
  }
  return fits;
}

void write_ranges(const fs::path& path, const std::vector<AugmentationRange>& ranges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "subject_id,t_min,t_max\n";
  for (const auto& r : ranges) out << r.subject_id << ',' << r.t_min << ',' << r.t_max << '\n';
}

std::vector<AugmentationRange> read_ranges(const fs::path& path) {
  std::vector<AugmentationRange> ranges;
  for (const auto& row : read_table(path, "subject_id,t_min,t_max")) {
    if (row.size() != 3) throw std::runtime_error(path.string() + ": malformed range row");
    ranges.push_back({row[0], std::stoi(row[1]), std::stoi(row[2])});
  }
  return ranges;
}

}  // namespace ecgid
