#include "ecgid/beats.hpp"
#include "ecgid/recording_io.hpp"
#include "ecgid/synth.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

using namespace ecgid;

namespace {

SubjectParams base_subject() {
  auto s = draw_subjects(1, "B", 1).front();
  s.t_offset_ms = 320.0;
  s.t_slope_ms_per_bpm = -1.2;
  return s;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("T centre follows the linear heart-rate law") {
  const auto s = base_subject();
  CHECK(s.t_center_ms(60.0) == doctest::Approx(320.0));
  CHECK(s.t_center_ms(60.0) * 200.0 / 1000.0 == doctest::Approx(64.0));
  CHECK(s.t_center_ms(140.0) == doctest::Approx(224.0));
  CHECK(std::lround(s.t_center_ms(140.0) * 0.2) == 45);

  auto rec = generate_recording(s, Session::S1, Condition::sit, 20.0, std::numeric_limits<double>::infinity(), 5);
  for (std::size_t k = 1; k < rec.truth.r_index.size(); ++k)
    CHECK(rec.truth.t_center_ms[k] == doctest::Approx(s.t_center_ms(rec.truth.heart_rate_bpm[k])).epsilon(1e-9));
}

TEST_CASE("subject parameter validation") {
  const auto ok = base_subject();
  CHECK_NOTHROW(ok.validate());
  auto s = ok;
  s.t_slope_ms_per_bpm = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ok;
  s.waves[kT].amplitude = 2.0 * s.waves[kR].amplitude;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ok;
  s.t_offset_ms = 500.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = ok;
  s.hr_rest_lo = s.hr_rest_hi + 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(generate_recording(ok, Session::S1, Condition::sit, 4.0, 20.0, 1), ConfigError);
}

TEST_CASE("corpus generation is deterministic and seed-dependent") {
  CorpusPlan plan;
  plan.target_subjects = 3;
  plan.auxiliary_subjects = 1;
  plan.rest_duration_s = 8.0;
  plan.exercise_duration_s = 20.0;
  const auto a = generate_corpus(plan);
  const auto b = generate_corpus(plan);
  REQUIRE(a.recordings.size() == 3 * 11 + 4);
  for (std::size_t i = 0; i < a.recordings.size(); ++i) {
    CHECK(a.recordings[i].recording.samples == b.recordings[i].recording.samples);
    CHECK(a.recordings[i].truth.r_index == b.recordings[i].truth.r_index);
  }
  plan.seed = 8;
  const auto c = generate_corpus(plan);
  CHECK(c.recordings[0].recording.samples != a.recordings[0].recording.samples);
  CHECK(a.subjects[3].subject_id == "A01");
  CHECK(a.recordings.back().recording.condition == Condition::exercise);
}

TEST_CASE("subjects have distinguishable mean rest beats") {
  CorpusPlan plan;
  plan.target_subjects = 20;
  plan.snr_db = std::numeric_limits<double>::infinity();
  const auto subjects = draw_subjects(20, "S", plan.seed, plan.min_distance);
  std::vector<std::vector<double>> templates;
  for (const auto& s : subjects) {
    const auto rec = generate_recording(s, Session::S1, Condition::sit, 20.0, plan.snr_db, 1);
    const auto beats = preprocess_recording(rec.recording, FilterSpec{}, DetectionConfig{});
    REQUIRE(!beats.empty());
    std::vector<double> mean(beats.front().samples.size(), 0.0);
    for (const auto& b : beats)
      for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += b.samples[i] / static_cast<double>(beats.size());
    templates.push_back(mean);
  }
  double worst = -1.0;
  for (std::size_t i = 0; i < templates.size(); ++i)
    for (std::size_t j = i + 1; j < templates.size(); ++j) worst = std::max(worst, pearson(templates[i], templates[j]));
  CHECK(worst < 0.99);
}

TEST_CASE("exercise recovery profile") {
  CHECK(recovery_heart_rate(140.0, 72.0, 0.0) == 140.0);
  CHECK(recovery_heart_rate(140.0, 72.0, 40.0) == doctest::Approx(72.0 + 68.0 / std::exp(1.0)));
  const double end = recovery_heart_rate(150.0, 72.0, 120.0);
  CHECK(std::abs(end - 72.0) < 10.0);

  const auto s = base_subject();
  const auto rec = generate_recording(s, Session::S3, Condition::exercise, 120.0, 20.0, 4);
  const auto& hr = rec.truth.heart_rate_bpm;
  REQUIRE(hr.size() > 100);
  CHECK(hr[1] >= 0.97 * s.hr_active_lo);
  CHECK(hr[1] <= 1.03 * s.hr_active_hi);
  CHECK(std::abs(hr.back() - s.hr_rest_hi) < 10.0);
  for (std::size_t k = 10; k < hr.size(); k += 10) CHECK(hr[k] < hr[k - 10] + 3.0);
}

TEST_CASE("requested SNR is met within 1 dB") {
  const auto s = base_subject();
  for (double snr : {10.0, 20.0, 30.0}) {
    const auto rec = generate_recording(s, Session::S1, Condition::sit, 30.0, snr, 9);
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < rec.clean.size(); ++i) {
      ps += rec.clean[i] * rec.clean[i];
      const double d = rec.recording.samples[i] - rec.clean[i];
      pn += d * d;
    }
    CHECK(std::abs(10.0 * std::log10(ps / pn) - snr) <= 1.0);
    CHECK(measured_snr_db(rec.clean, rec.recording.samples) == doctest::Approx(10.0 * std::log10(ps / pn)));
  }
  const auto clean = generate_recording(s, Session::S1, Condition::sit, 10.0, std::numeric_limits<double>::infinity(), 9);
  CHECK(clean.clean == clean.recording.samples);
}

TEST_CASE("detected T-peaks recover each subject's slope within 15%") {
  const auto subjects = draw_subjects(6, "R", 21);
  for (const auto& s : subjects) {
    std::vector<double> hr, tp;
    for (auto [session, cond, dur] : {std::tuple{Session::S2, Condition::sit, 30.0},
                                      std::tuple{Session::S2, Condition::stand, 30.0},
                                      std::tuple{Session::S3, Condition::exercise, 120.0}}) {
      const auto rec = generate_recording(s, session, cond, dur, 20.0, 77);
      for (const auto& b : preprocess_recording(rec.recording, FilterSpec{}, DetectionConfig{})) {
        hr.push_back(b.heart_rate_bpm);
        tp.push_back(b.t_peak_rel_r);
      }
    }
    REQUIRE(hr.size() > 50);
    const double mx = std::accumulate(hr.begin(), hr.end(), 0.0) / static_cast<double>(hr.size());
    const double my = std::accumulate(tp.begin(), tp.end(), 0.0) / static_cast<double>(tp.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < hr.size(); ++i) {
      sxy += (hr[i] - mx) * (tp[i] - my);
      sxx += (hr[i] - mx) * (hr[i] - mx);
    }
    const double expected = s.t_slope_ms_per_bpm * 200.0 / 1000.0;
    CAPTURE(s.subject_id);
    CHECK(sxy / sxx == doctest::Approx(expected).epsilon(0.15));
  }
}

TEST_CASE("corpus files and ground-truth sidecars") {
  CorpusPlan plan;
  plan.target_subjects = 2;
  plan.rest_duration_s = 6.0;
  plan.exercise_duration_s = 10.0;
  const auto corpus = generate_corpus(plan);
  const auto dir = std::filesystem::temp_directory_path() / "ecgid_synth_io";
  std::filesystem::remove_all(dir);
  write_corpus(dir, corpus);
  CHECK(std::filesystem::exists(dir / "subjects.csv"));
  const auto& r0 = corpus.recordings.front();
  const auto stem = recording_stem(r0.recording);
  const auto truth = read_ground_truth(dir / (stem + ".truth.csv"));
  CHECK(truth.r_index == r0.truth.r_index);
  REQUIRE(truth.t_center_ms.size() == r0.truth.t_center_ms.size());
  for (std::size_t i = 0; i < truth.t_center_ms.size(); ++i) {
    CHECK(truth.t_center_ms[i] == r0.truth.t_center_ms[i]);
    CHECK(truth.r_time_s[i] == r0.truth.r_time_s[i]);
  }
  const auto rec = read_recording(dir / (stem + ".rec"));
  CHECK(rec.samples == r0.recording.samples);
  std::filesystem::remove_all(dir);
}

TEST_CASE("corpus plan validation") {
  CorpusPlan p;
  p.target_subjects = 1;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = {};
  p.rest_duration_s = 2.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
}
