#include "ecgid/beats.hpp"
#include "ecgid/recording_io.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace ecgid {

namespace {

int samples_for(double seconds, double fs) { return static_cast<int>(std::lround(seconds * fs)); }

}  // namespace

BeatGeometry BeatGeometry::for_rate(double fs) {
  BeatGeometry g;
  g.length = samples_for(0.550, fs);
  g.r_index = samples_for(0.175, fs);
  g.t_window_start = g.length - samples_for(0.300, fs);
  g.st_split = samples_for(0.250, fs);
  return g;
}

bool BeatTemplate::satisfies_invariants() const {
  const BeatGeometry g = geometry();
  if (static_cast<int>(samples.size()) != g.length || r_index != g.r_index) return false;
  if (!(heart_rate_bpm > 0.0) || !std::isfinite(heart_rate_bpm)) return false;
  if (t_peak_rel_r != -1 && (t_peak_rel_r < g.min_t_rel_r() || t_peak_rel_r >= g.max_t_rel_r())) return false;
  return true;
}

void DetectionConfig::validate() const {
  if (averaging_window < 1) throw ConfigError("detection.averaging_window must be >= 1");
  if (!(zscore_threshold > 0.0)) throw ConfigError("detection.zscore_threshold must be > 0");
  if (!(iqr_factor > 0.0)) throw ConfigError("detection.iqr_factor must be > 0");
}

// ---------------------------------------------------------------------------
// R-peak detection

std::vector<std::size_t> detect_r_peaks(const RawRecording& rec, Diagnostics* diag) {
  rec.validate();
  const double fs = rec.sample_rate_hz;
  const auto& x = rec.samples;
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  if (rec.duration_s() < 1.0) {
    warn(diag, "detect_r_peaks: " + rec.subject_id + " recording shorter than 1 s");
    return {};
  }

  // Energy envelope.
  std::vector<double> sq(x.size(), 0.0);
  for (std::ptrdiff_t i = 2; i + 2 < n; ++i) {
    const double d = (-x[i - 2] - 2.0 * x[i - 1] + 2.0 * x[i + 1] + x[i + 2]) / 8.0;
    sq[i] = d * d;
  }
  const std::ptrdiff_t half_win = samples_for(0.075, fs);
  std::vector<double> mwi(x.size(), 0.0);
  {
    std::vector<double> csum(x.size() + 1, 0.0);
    for (std::ptrdiff_t i = 0; i < n; ++i) csum[i + 1] = csum[i] + sq[i];
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, i - half_win);
      const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n, i + half_win + 1);
      mwi[i] = (csum[hi] - csum[lo]) / static_cast<double>(2 * half_win + 1);
    }
  }

  std::vector<std::ptrdiff_t> candidates;
  for (std::ptrdiff_t i = 1; i + 1 < n; ++i)
    if (mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1]) candidates.push_back(i);
  if (candidates.empty()) return {};

  const std::ptrdiff_t refractory = samples_for(0.200, fs);
  const std::ptrdiff_t t_wave_window = samples_for(0.360, fs);

  const std::ptrdiff_t init_len = std::min<std::ptrdiff_t>(n, samples_for(2.0, fs));
  double spk = 0.25 * *std::max_element(mwi.begin(), mwi.begin() + init_len);
  double npk = 0.5 * std::accumulate(mwi.begin(), mwi.begin() + init_len, 0.0) / static_cast<double>(init_len);
  auto thr1 = [&] { return npk + 0.25 * (spk - npk); };

  auto max_slope = [&](std::ptrdiff_t c) {
    double m = 0.0;
    for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, c - half_win); i <= std::min(n - 1, c + half_win); ++i)
      m = std::max(m, sq[i]);
    return m;
  };

  std::vector<std::ptrdiff_t> qrs;
  std::vector<std::ptrdiff_t> rr_history;
  double last_slope = 0.0;
  std::size_t last_qrs_candidate = 0;  // index into candidates of the last accepted QRS

  auto rr_mean = [&]() -> double {
    if (rr_history.empty()) return 0.0;
    const std::size_t k = std::min<std::size_t>(8, rr_history.size());
    double s = 0.0;
    for (std::size_t i = rr_history.size() - k; i < rr_history.size(); ++i) s += static_cast<double>(rr_history[i]);
    return s / static_cast<double>(k);
  };
  auto accept = [&](std::size_t ci, double weight) {
    const std::ptrdiff_t c = candidates[ci];
    if (!qrs.empty()) rr_history.push_back(c - qrs.back());
    qrs.push_back(c);
    last_slope = max_slope(c);
    last_qrs_candidate = ci;
    // A single accepted peak may at most triple the signal level, so an
    // artefact spike cannot lift the threshold above the following beats.
    spk = weight * std::min(mwi[c], 3.0 * spk) + (1.0 - weight) * spk;
  };

  for (std::size_t ci = 0; ci < candidates.size(); ++ci) {
    const std::ptrdiff_t c = candidates[ci];
    const double v = mwi[c];

    // Search back for a missed beat at half threshold.
    const double rr = rr_mean();
    if (!qrs.empty() && rr > 0.0 && static_cast<double>(c - qrs.back()) > 1.66 * rr) {
      std::size_t best = candidates.size();
      for (std::size_t j = last_qrs_candidate + 1; j < ci; ++j) {
        const std::ptrdiff_t cj = candidates[j];
        if (cj - qrs.back() < refractory || c - cj < refractory) continue;
        if (mwi[cj] > 0.5 * thr1() && (best == candidates.size() || mwi[cj] > mwi[candidates[best]])) best = j;
      }
      if (best != candidates.size()) accept(best, 0.25);
    }

    if (v > thr1()) {
      if (!qrs.empty() && c - qrs.back() < refractory) {
        npk = 0.125 * v + 0.875 * npk;
        continue;
      }
      if (!qrs.empty() && c - qrs.back() < t_wave_window && max_slope(c) < 0.5 * last_slope) {
        npk = 0.125 * v + 0.875 * npk;
        continue;
      }
      accept(ci, 0.125);
    } else {
      npk = 0.125 * v + 0.875 * npk;
    }
  }

  // Move each detection onto the signal maximum: first the largest sample in
  // a +-75 ms neighbourhood of the envelope peak, then climb until it is the
  // maximum within +-50 ms.
  const std::ptrdiff_t search = samples_for(0.075, fs);
  const std::ptrdiff_t local = samples_for(0.050, fs);
  auto argmax_in = [&](std::ptrdiff_t lo, std::ptrdiff_t hi) {
    lo = std::max<std::ptrdiff_t>(0, lo);
    hi = std::min(n - 1, hi);
    std::ptrdiff_t best = lo;
    for (std::ptrdiff_t i = lo; i <= hi; ++i)
      if (x[i] > x[best]) best = i;
    return best;
  };
  std::vector<std::ptrdiff_t> refined;
  refined.reserve(qrs.size());
  for (std::ptrdiff_t c : qrs) {
    std::ptrdiff_t p = argmax_in(c - search, c + search);
    for (int iter = 0; iter < 100; ++iter) {
      const std::ptrdiff_t q = argmax_in(p - local, p + local);
      if (x[q] <= x[p]) break;
      p = q;
    }
    refined.push_back(p);
  }
  std::sort(refined.begin(), refined.end());
  refined.erase(std::unique(refined.begin(), refined.end()), refined.end());

  std::vector<std::size_t> peaks;
  for (std::ptrdiff_t p : refined) {
    if (!peaks.empty() && p - static_cast<std::ptrdiff_t>(peaks.back()) < refractory) {
      if (x[p] > x[peaks.back()]) peaks.back() = static_cast<std::size_t>(p);
      continue;
    }
    peaks.push_back(static_cast<std::size_t>(p));
  }
  return peaks;
}

// ---------------------------------------------------------------------------

double quantile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile_linear: empty input");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

std::vector<std::size_t> remove_amplitude_outliers(std::span<const std::size_t> peaks, const RawRecording& rec,
                                                   double iqr_factor) {
  if (peaks.size() < 4) return {peaks.begin(), peaks.end()};
  std::vector<double> amps;
  amps.reserve(peaks.size());
  for (std::size_t p : peaks) amps.push_back(rec.samples.at(p));
  std::vector<double> sorted = amps;
  std::sort(sorted.begin(), sorted.end());
  const double q1 = quantile_linear(sorted, 0.25);
  const double q3 = quantile_linear(sorted, 0.75);
  const double iqr = q3 - q1;
  const double lo = q1 - iqr_factor * iqr;
  const double hi = q3 + iqr_factor * iqr;
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < peaks.size(); ++i)
    if (amps[i] >= lo && amps[i] <= hi) kept.push_back(peaks[i]);
  return kept;
}

std::vector<double> compute_heart_rates(std::span<const std::size_t> peaks, double fs) {
  if (peaks.size() < 2) throw std::invalid_argument("compute_heart_rates: need at least 2 peaks");
  std::vector<double> hr(peaks.size());
  for (std::size_t i = 1; i < peaks.size(); ++i) {
    if (peaks[i] <= peaks[i - 1]) throw std::invalid_argument("compute_heart_rates: peaks must be increasing");
    hr[i] = 60.0 * fs / static_cast<double>(peaks[i] - peaks[i - 1]);
  }
  hr[0] = hr[1];
  return hr;
}

SegmentResult segment_beats(const RawRecording& rec, std::span<const std::size_t> peaks,
                            std::span<const double> heart_rates) {
  if (peaks.size() != heart_rates.size())
    throw std::invalid_argument("segment_beats: peaks and heart rates differ in length");
  const BeatGeometry g = BeatGeometry::for_rate(rec.sample_rate_hz);
  SegmentResult res;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const auto p = static_cast<std::ptrdiff_t>(peaks[i]);
    const std::ptrdiff_t start = p - g.r_index;
    if (start < 0 || start + g.length > static_cast<std::ptrdiff_t>(rec.samples.size())) {
      ++res.dropped;
      continue;
    }
    BeatTemplate b;
    b.samples.assign(rec.samples.begin() + start, rec.samples.begin() + start + g.length);
    b.r_index = g.r_index;
    b.heart_rate_bpm = heart_rates[i];
    b.subject_id = rec.subject_id;
    b.session = rec.session;
    b.condition = rec.condition;
    b.source_time_s = static_cast<double>(start) / rec.sample_rate_hz;
    b.sample_rate_hz = rec.sample_rate_hz;
    res.beats.push_back(std::move(b));
  }
  return res;
}

std::vector<BeatTemplate> average_beats(std::span<const BeatTemplate> beats, int window, Diagnostics* diag) {
  if (window < 1) throw std::invalid_argument("average_beats: window must be >= 1");
  const auto w = static_cast<std::size_t>(window);
  if (beats.size() < w) {
    if (!beats.empty())
      warn(diag, "average_beats: " + beats.front().subject_id + " has " + std::to_string(beats.size()) +
                     " beats, fewer than the window " + std::to_string(window));
    return {};
  }
  std::vector<BeatTemplate> out;
  out.reserve(beats.size() - w + 1);
  const std::size_t len = beats.front().samples.size();
  for (std::size_t i = 0; i + w <= beats.size(); ++i) {
    BeatTemplate avg = beats[i];
    if (w == 1) {
      out.push_back(std::move(avg));
      continue;
    }
    std::fill(avg.samples.begin(), avg.samples.end(), 0.0);
    double hr = 0.0;
    for (std::size_t j = i; j < i + w; ++j) {
      for (std::size_t k = 0; k < len; ++k) avg.samples[k] += beats[j].samples[k];
      hr += beats[j].heart_rate_bpm;
    }
    for (double& v : avg.samples) v /= static_cast<double>(w);
    avg.heart_rate_bpm = hr / static_cast<double>(w);
    avg.t_peak_rel_r = -1;
    out.push_back(std::move(avg));
  }
  return out;
}

int detect_t_peak(const BeatTemplate& beat) {
  const BeatGeometry g = beat.geometry();
  if (static_cast<int>(beat.samples.size()) != g.length)
    throw std::invalid_argument("detect_t_peak: beat length does not match its sample rate");
  int best = g.t_window_start;
  for (int i = g.t_window_start + 1; i < g.length; ++i)
    if (beat.samples[i] > beat.samples[best]) best = i;
  return best - g.r_index;
}

std::optional<TPeakStats> tpeak_stats(std::span<const BeatTemplate> beats, Diagnostics* diag) {
  if (beats.size() < 10) {
    warn(diag, "T-peak gate disabled: group has " + std::to_string(beats.size()) + " beats (< 10)");
    return std::nullopt;
  }
  TPeakStats s;
  s.count = beats.size();
  for (const auto& b : beats) s.mean += b.t_peak_rel_r;
  s.mean /= static_cast<double>(s.count);
  double var = 0.0;
  for (const auto& b : beats) var += (b.t_peak_rel_r - s.mean) * (b.t_peak_rel_r - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(s.count));
  return s;
}

std::vector<BeatTemplate> gate_t_peaks(std::vector<BeatTemplate> beats, const std::optional<TPeakStats>& stats,
                                       double threshold) {
  if (!stats || stats->stddev <= 0.0) return beats;
  std::erase_if(beats, [&](const BeatTemplate& b) {
    return std::abs((b.t_peak_rel_r - stats->mean) / stats->stddev) > threshold;
  });
  return beats;
}

std::vector<std::vector<BeatTemplate>> zscore_gate_t_peaks(std::vector<std::vector<BeatTemplate>> groups,
                                                           double threshold, Diagnostics* diag) {
  for (auto& g : groups) {
    const auto stats = tpeak_stats(g, diag);
    g = gate_t_peaks(std::move(g), stats, threshold);
  }
  return groups;
}

std::vector<BeatTemplate> preprocess_recording(const RawRecording& rec, const FilterSpec& filter,
                                               const DetectionConfig& cfg, Diagnostics* diag,
                                               PreprocessCounts* counts) {
  cfg.validate();
  const RawRecording filtered = bandpass_filter(rec, filter);
  const auto peaks = detect_r_peaks(filtered, diag);
  const auto kept = remove_amplitude_outliers(peaks, filtered, cfg.iqr_factor);
  PreprocessCounts local;
  local.detected = peaks.size();
  local.after_iqr = kept.size();
  std::vector<BeatTemplate> out;
  if (kept.size() >= 2) {
    const auto hr = compute_heart_rates(kept, filtered.sample_rate_hz);
    auto seg = segment_beats(filtered, kept, hr);
    local.dropped_at_edges = seg.dropped;
    out = average_beats(seg.beats, cfg.averaging_window, diag);
    for (auto& b : out) b.t_peak_rel_r = detect_t_peak(b);
  } else {
    warn(diag, "preprocess: " + recording_stem(rec) + " has fewer than 2 usable R-peaks");
  }
  local.emitted = out.size();
  if (counts) *counts = local;
  return out;
}

bool is_training_session(Session s) {
  return s == Session::S1 || s == Session::S2 || s == Session::S4 || s == Session::S6;
}

std::vector<BeatTemplate> gate_corpus_t_peaks(std::vector<BeatTemplate> beats,
                                              const std::set<std::string>& auxiliary_subjects,
                                              const DetectionConfig& cfg, Diagnostics* diag) {
  auto is_rest_train = [](const BeatTemplate& b) {
    return is_training_session(b.session) && (b.condition == Condition::sit || b.condition == Condition::stand);
  };

  std::vector<BeatTemplate> aux_exercise;
  for (const auto& b : beats)
    if (b.condition == Condition::exercise && auxiliary_subjects.contains(b.subject_id)) aux_exercise.push_back(b);
  const auto exercise_stats = tpeak_stats(aux_exercise, diag);

  std::map<std::string, std::vector<BeatTemplate>> rest_reference;
  for (const auto& b : beats)
    if (is_rest_train(b)) rest_reference[cfg.per_subject_tpeak_pooling ? b.subject_id : std::string()].push_back(b);
  std::map<std::string, std::optional<TPeakStats>> rest_stats;
  for (const auto& [key, group] : rest_reference) rest_stats[key] = tpeak_stats(group, diag);

  std::erase_if(beats, [&](const BeatTemplate& b) {
    std::optional<TPeakStats> stats;
    if (b.condition == Condition::exercise) {
      stats = exercise_stats;
    } else {
      const auto it = rest_stats.find(cfg.per_subject_tpeak_pooling ? b.subject_id : std::string());
      if (it != rest_stats.end()) stats = it->second;
    }
    if (!stats || stats->stddev <= 0.0) return false;
    return std::abs((b.t_peak_rel_r - stats->mean) / stats->stddev) > cfg.zscore_threshold;
  });
  return beats;
}

}  // namespace ecgid
