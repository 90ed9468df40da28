#pragma once

#include "ecgid/beats.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace ecgid {

struct SplitPlan {
  std::set<std::pair<Session, Condition>> train;
  std::set<std::pair<Session, Condition>> test;
  double val_fraction = 0.2;

  // Train S1, S2, S4, S6 x {sit, stand}; test S3 x {sit, exercise}, S5 x {supine, tripod}.
  static SplitPlan standard();
  bool is_train(const BeatTemplate& b) const { return train.count({b.session, b.condition}) != 0; }
  bool is_test(const BeatTemplate& b) const { return test.count({b.session, b.condition}) != 0; }
  // ConfigError when a (session, condition) pair is in both sets.
  void validate() const;
};

enum class EvalCondition { sit = 0, exercise_phase_1 = 1, exercise_phase_2 = 2, supine = 3, tripod = 4 };
inline constexpr std::array<EvalCondition, 5> kEvalConditions{
    EvalCondition::sit, EvalCondition::exercise_phase_1, EvalCondition::exercise_phase_2, EvalCondition::supine,
    EvalCondition::tripod};

std::string_view to_string(EvalCondition c);
std::string_view short_label(EvalCondition c);  // Sit, Ex_P1, Ex_P2, Supine, Tripod

inline constexpr double kPhaseBoundaryS = 60.0;

// Test condition of a beat: exercise beats go to phase 1 when their onset is
// before 60 s, phase 2 otherwise. nullopt for beats outside the test plan.
std::optional<EvalCondition> eval_condition(const BeatTemplate& b, const SplitPlan& plan);

struct PhaseSplit {
  std::vector<BeatTemplate> phase1;
  std::vector<BeatTemplate> phase2;
};

// Half-open split at 60 s. Recordings shorter than 61 s put every beat in
// phase 1 and raise a warning.
PhaseSplit split_exercise_phases(std::span<const BeatTemplate> beats, double recording_duration_s,
                                 Diagnostics* diag = nullptr);

// Per-subject shuffled split: each subject with at least two beats lands in
// both partitions with round(fraction * n) validation beats (at least one).
struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
TrainValSplit stratified_split(std::span<const BeatTemplate> beats, double val_fraction, std::uint64_t seed);

// Identification counts. IDR = correct / total, FIR = 1 - IDR.
struct IdCounts {
  std::size_t correct = 0;
  std::size_t total = 0;

  std::size_t wrong() const { return total - correct; }
  std::optional<double> idr() const;
  std::optional<double> fir() const;
  IdCounts& operator+=(const IdCounts& o) {
    correct += o.correct;
    total += o.total;
    return *this;
  }
};

IdCounts count_matches(std::span<const int> predicted, std::span<const int> truth);
// nullopt for empty input; throws std::invalid_argument on unequal lengths.
std::optional<double> compute_idr(std::span<const int> predicted, std::span<const int> truth);

struct ConditionSummary {
  std::vector<IdCounts> per_run;
  std::optional<double> mean;    // over runs with data
  std::optional<double> stddev;  // sample standard deviation
};

// Mean and sample standard deviation of the per-run IDRs that exist.
ConditionSummary summarize(std::vector<IdCounts> per_run);

struct EvalReport {
  std::string ablation_id;
  bool classifier_augmented = false;
  int runs = 0;
  std::uint64_t base_seed = 0;
  std::array<ConditionSummary, 5> conditions;

  const ConditionSummary& at(EvalCondition c) const { return conditions[static_cast<std::size_t>(c)]; }
  ConditionSummary& at(EvalCondition c) { return conditions[static_cast<std::size_t>(c)]; }
};

// Method x condition table of mean IDR (%) +- std.
std::string format_report_table(std::span<const EvalReport> reports);
// Machine-readable form with per-run counts.
std::string report_json(std::span<const EvalReport> reports);

}  // namespace ecgid
