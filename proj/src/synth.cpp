#include "ecgid/synth.hpp"

#include "ecgid/recording_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace ecgid {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return mix(a ^ mix(b)); }

}  // namespace

void SubjectParams::validate() const {
  const double r = std::abs(waves[kR].amplitude);
  for (int i : {kP, kQ, kS, kT})
    if (!(std::abs(waves[static_cast<std::size_t>(i)].amplitude) < r))
      throw ConfigError("subject " + subject_id + ": R amplitude must dominate every other wave");
  for (const auto& w : waves)
    if (!(w.width_ms > 0.0)) throw ConfigError("subject " + subject_id + ": wave widths must be positive");
  if (!(t_slope_ms_per_bpm < 0.0)) throw ConfigError("subject " + subject_id + ": t_slope must be negative");
  if (!(hr_rest_lo > 0.0 && hr_rest_lo <= hr_rest_hi))
    throw ConfigError("subject " + subject_id + ": hr_rest range is empty");
  if (!(hr_active_lo > hr_rest_hi && hr_active_lo <= hr_active_hi))
    throw ConfigError("subject " + subject_id + ": hr_active range must lie above hr_rest");
  for (double hr : {hr_rest_lo, hr_rest_hi}) {
    const double t = t_center_ms(hr);
    if (t < 75.0 || t > 375.0)
      throw ConfigError("subject " + subject_id + ": resting T centre " + std::to_string(t) +
                        " ms outside [75, 375]");
  }
}

double condition_hr_shift(Condition c) {
  switch (c) {
    case Condition::sit: return 0.0;
    case Condition::stand: return 12.0;
    case Condition::supine: return -4.0;
    case Condition::tripod: return 6.0;
    case Condition::exercise: return 0.0;
  }
  return 0.0;
}

double recovery_heart_rate(double active, double rest_top, double t_s) {
  return rest_top + (active - rest_top) * std::exp(-t_s / kRecoveryTimeConstantS);
}

SynthRecording generate_recording(const SubjectParams& params, Session session, Condition condition,
                                  double duration_s, double snr_db, std::uint64_t seed, double sample_rate_hz) {
  params.validate();
  if (!(duration_s >= 5.0)) throw ConfigError("synthetic recordings must be at least 5 s long");
  if (!(sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");

  std::mt19937_64 rng(mix(seed, params.rng_seed));
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit;

  // Session-to-session morphology drift.
  std::array<Wave, 5> waves = params.waves;
  for (std::size_t i = 0; i < waves.size(); ++i) {
    waves[i].amplitude *= 1.0 + 0.03 * gauss(rng);
    if (i != kR) waves[i].center_ms += 1.0 * gauss(rng);
    waves[i].width_ms *= 1.0 + 0.02 * gauss(rng);
  }

  const bool exercise = condition == Condition::exercise;
  const double base_hr = params.hr_rest_lo + (params.hr_rest_hi - params.hr_rest_lo) * unit(rng) +
                         condition_hr_shift(condition);
  const double active = params.hr_active_lo + (params.hr_active_hi - params.hr_active_lo) * unit(rng);
  const double jitter = exercise ? 0.005 : 0.01;
  auto hr_at = [&](double t) { return exercise ? recovery_heart_rate(active, params.hr_rest_hi, t) : base_hr; };

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  SynthRecording out;
  out.recording.subject_id = params.subject_id;
  out.recording.session = session;
  out.recording.condition = condition;
  out.recording.sample_rate_hz = sample_rate_hz;
  out.clean.assign(n, 0.0);

  auto& truth = out.truth;
  double t = 0.2 + 0.3 * unit(rng);
  while (true) {
    const auto idx = static_cast<std::size_t>(std::llround(t * sample_rate_hz));
    if (idx >= n) break;
    truth.r_index.push_back(idx);
    truth.r_time_s.push_back(static_cast<double>(idx) / sample_rate_hz);
    t = truth.r_time_s.back() + 60.0 / hr_at(truth.r_time_s.back()) * (1.0 + jitter * gauss(rng));
  }
  for (std::size_t k = 0; k < truth.r_index.size(); ++k) {
    double hr;
    if (k > 0)
      hr = 60.0 / (truth.r_time_s[k] - truth.r_time_s[k - 1]);
    else if (truth.r_index.size() > 1)
      hr = 60.0 / (truth.r_time_s[1] - truth.r_time_s[0]);
    else
      hr = hr_at(0.0);
    truth.heart_rate_bpm.push_back(hr);
    truth.t_center_ms.push_back(params.t_center_ms(hr));
  }

  for (std::size_t k = 0; k < truth.r_index.size(); ++k) {
    for (std::size_t w = 0; w < waves.size(); ++w) {
      const double center_ms = w == kT ? truth.t_center_ms[k] : waves[w].center_ms;
      const double c = truth.r_time_s[k] + center_ms / 1000.0;
      const double sigma = waves[w].width_ms / 1000.0;
      const auto lo = static_cast<long>(std::floor((c - 5.0 * sigma) * sample_rate_hz));
      const auto hi = static_cast<long>(std::ceil((c + 5.0 * sigma) * sample_rate_hz));
      for (long i = std::max(0L, lo); i <= hi && i < static_cast<long>(n); ++i) {
        const double d = (static_cast<double>(i) / sample_rate_hz - c) / sigma;
        out.clean[static_cast<std::size_t>(i)] += waves[w].amplitude * std::exp(-0.5 * d * d);
      }
    }
  }

  out.recording.samples = out.clean;
  if (std::isfinite(snr_db)) {
    double power = 0.0;
    for (double v : out.clean) power += v * v;
    power /= static_cast<double>(std::max<std::size_t>(n, 1));
    const double sd = std::sqrt(power / std::pow(10.0, snr_db / 10.0));
    for (double& v : out.recording.samples) v += sd * gauss(rng);
  }
  return out;
}

namespace {

std::vector<double> normalized(const SubjectParams& p) {
  return {p.t_offset_ms / 15.0,
          p.t_slope_ms_per_bpm / 0.25,
          p.waves[kT].amplitude / 0.06,
          p.waves[kT].width_ms / 5.0,
          p.waves[kR].width_ms / 1.5,
          p.waves[kS].amplitude / 0.06,
          p.waves[kS].center_ms / 4.0,
          p.waves[kQ].amplitude / 0.04,
          p.waves[kP].amplitude / 0.03,
          p.waves[kP].center_ms / 10.0};
}

double distance(const SubjectParams& a, const SubjectParams& b) {
  const auto x = normalized(a), y = normalized(b);
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

// Noise-free beat over [-175, 375) ms at the middle of the rest range, 1 ms grid.
std::vector<double> rest_template(const SubjectParams& p) {
  const double hr = 0.5 * (p.hr_rest_lo + p.hr_rest_hi);
  std::vector<double> out(550, 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double t = static_cast<double>(i) - 175.0;
    for (std::size_t w = 0; w < p.waves.size(); ++w) {
      const double c = w == kT ? p.t_center_ms(hr) : p.waves[w].center_ms;
      const double d = (t - c) / p.waves[w].width_ms;
      out[i] += p.waves[w].amplitude * std::exp(-0.5 * d * d);
    }
  }
  return out;
}

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

SubjectParams draw_one(std::mt19937_64& rng) {
  auto u = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
  SubjectParams p;
  p.waves[kP] = {u(0.1, 0.16), u(-150.0, -140.0), u(18.0, 22.0)};
  p.waves[kQ] = {u(-0.12, -0.08), u(-26.0, -22.0), u(7.0, 9.0)};
  p.waves[kR] = {u(0.9, 1.1), 0.0, u(8.0, 10.0)};
  p.waves[kS] = {u(-0.25, -0.15), u(25.0, 30.0), u(8.0, 10.0)};
  p.waves[kT] = {u(0.2, 0.45), 0.0, u(30.0, 50.0)};
  p.t_offset_ms = u(280.0, 350.0);
  p.t_slope_ms_per_bpm = u(-1.6, -0.9);
  p.hr_rest_lo = u(58.0, 72.0);
  p.hr_rest_hi = p.hr_rest_lo + 8.0;
  p.hr_active_lo = u(125.0, 140.0);
  p.hr_active_hi = p.hr_active_lo + 15.0;
  p.rng_seed = rng();
  return p;
}

}  // namespace

std::vector<SubjectParams> draw_subjects(int n, const std::string& prefix, std::uint64_t seed, double min_distance) {
  std::uint64_t tag = 1469598103934665603ULL;
  for (unsigned char c : prefix) tag = (tag ^ c) * 1099511628211ULL;
  std::mt19937_64 rng(mix(seed, tag));
  std::vector<SubjectParams> out;
  std::vector<std::vector<double>> templates;
  for (int i = 0; i < n; ++i) {
    // Preference: both separations met, then template separation, then the
    // largest parameter gap.
    SubjectParams best;
    std::vector<double> best_template;
    std::pair<int, double> best_score{-1, -1.0};
    for (int attempt = 0; attempt < 2000; ++attempt) {
      SubjectParams cand = draw_one(rng);
      auto tmpl = rest_template(cand);
      double gap = std::numeric_limits<double>::infinity();
      double corr = -1.0;
      for (std::size_t k = 0; k < out.size(); ++k) {
        gap = std::min(gap, distance(cand, out[k]));
        corr = std::max(corr, correlation(tmpl, templates[k]));
      }
      const bool distinct = corr < kMaxTemplateCorrelation;
      const std::pair<int, double> score{(distinct ? 1 : 0) + (distinct && gap >= min_distance ? 1 : 0), gap};
      if (score > best_score) {
        best = cand;
        best_template = std::move(tmpl);
        best_score = score;
      }
      if (best_score.first == 2) break;
    }
    char id[32];
    std::snprintf(id, sizeof id, "%s%02d", prefix.c_str(), i + 1);
    best.subject_id = id;
    best.validate();
    out.push_back(best);
    templates.push_back(std::move(best_template));
  }
  return out;
}

void CorpusPlan::validate() const {
  if (target_subjects < 2) throw ConfigError("synth.target_subjects must be at least 2");
  if (auxiliary_subjects < 0) throw ConfigError("synth.auxiliary_subjects must be non-negative");
  if (!(rest_duration_s >= 5.0) || !(exercise_duration_s >= 5.0))
    throw ConfigError("synth durations must be at least 5 s");
}

SynthCorpus generate_corpus(const CorpusPlan& plan) {
  plan.validate();
  SynthCorpus corpus;
  corpus.subjects = draw_subjects(plan.target_subjects + plan.auxiliary_subjects, "S", plan.seed, plan.min_distance);
  using SC = std::pair<Session, Condition>;
  const std::vector<SC> target_plan{
      {Session::S1, Condition::sit},      {Session::S2, Condition::sit},    {Session::S2, Condition::stand},
      {Session::S3, Condition::sit},      {Session::S3, Condition::exercise}, {Session::S4, Condition::sit},
      {Session::S4, Condition::stand},    {Session::S5, Condition::supine}, {Session::S5, Condition::tripod},
      {Session::S6, Condition::sit},      {Session::S6, Condition::stand},
  };
  const std::vector<SC> aux_plan{
      {Session::S2, Condition::sit},
      {Session::S2, Condition::stand},
      {Session::S3, Condition::sit},
      {Session::S3, Condition::exercise},
  };
  for (std::size_t i = 0; i < corpus.subjects.size(); ++i) {
    auto& subject = corpus.subjects[i];
    const bool aux = static_cast<int>(i) >= plan.target_subjects;
    char id[32];
    if (aux)
      std::snprintf(id, sizeof id, "A%02d", static_cast<int>(i) - plan.target_subjects + 1);
    else
      std::snprintf(id, sizeof id, "T%02d", static_cast<int>(i) + 1);
    subject.subject_id = id;
    for (const auto& [session, condition] : aux ? aux_plan : target_plan) {
      const double duration = condition == Condition::exercise ? plan.exercise_duration_s : plan.rest_duration_s;
      const std::uint64_t seed =
          mix(mix(plan.seed, i), static_cast<std::uint64_t>(session) * 16 + static_cast<std::uint64_t>(condition));
      corpus.recordings.push_back(generate_recording(subject, session, condition, duration, plan.snr_db, seed));
    }
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir);
  for (const auto& r : corpus.recordings) {
    const auto stem = recording_stem(r.recording);
    write_recording(dir / (stem + ".rec"), r.recording);
    std::ofstream os(dir / (stem + ".truth.csv"));
    os << "r_index,r_time_s,t_center_ms,heart_rate_bpm\n";
    for (std::size_t k = 0; k < r.truth.r_index.size(); ++k)
      os << r.truth.r_index[k] << ',' << format_double(r.truth.r_time_s[k]) << ','
         << format_double(r.truth.t_center_ms[k]) << ',' << format_double(r.truth.heart_rate_bpm[k]) << '\n';
    if (!os) throw std::runtime_error("cannot write ground truth for " + stem);
  }
  std::ofstream os(dir / "subjects.csv");
  os << "subject_id,t_offset_ms,t_slope_ms_per_bpm,hr_rest_lo,hr_rest_hi,hr_active_lo,hr_active_hi\n";
  for (const auto& s : corpus.subjects)
    os << s.subject_id << ',' << format_double(s.t_offset_ms) << ',' << format_double(s.t_slope_ms_per_bpm) << ','
       << format_double(s.hr_rest_lo) << ',' << format_double(s.hr_rest_hi) << ',' << format_double(s.hr_active_lo)
       << ',' << format_double(s.hr_active_hi) << '\n';
}

GroundTruth read_ground_truth(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  GroundTruth g;
  std::string line;
  std::getline(is, line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c, d;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    std::getline(ss, c, ',');
    std::getline(ss, d, ',');
    g.r_index.push_back(static_cast<std::size_t>(std::stoull(a)));
    g.r_time_s.push_back(parse_double(b));
    g.t_center_ms.push_back(parse_double(c));
    g.heart_rate_bpm.push_back(parse_double(d));
  }
  return g;
}

double measured_snr_db(std::span<const double> clean, std::span<const double> noisy) {
  double ps = 0.0, pn = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    ps += clean[i] * clean[i];
    pn += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  }
  return 10.0 * std::log10(ps / pn);
}

}  // namespace ecgid
