#include "ecgid/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace ecgid {

SplitPlan SplitPlan::standard() {
  SplitPlan p;
  for (Session s : {Session::S1, Session::S2, Session::S4, Session::S6})
    for (Condition c : {Condition::sit, Condition::stand}) p.train.insert({s, c});
  p.test = {{Session::S3, Condition::sit},
            {Session::S3, Condition::exercise},
            {Session::S5, Condition::supine},
            {Session::S5, Condition::tripod}};
  return p;
}

void SplitPlan::validate() const {
  for (const auto& k : train)
    if (test.count(k))
      throw ConfigError("split: " + std::string(to_string(k.first)) + "/" + std::string(to_string(k.second)) +
                        " is both train and test");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ConfigError("split.val_fraction must lie in (0, 1)");
}

std::string_view to_string(EvalCondition c) {
  switch (c) {
    case EvalCondition::sit: return "sit";
    case EvalCondition::exercise_phase_1: return "exercise_phase_1";
    case EvalCondition::exercise_phase_2: return "exercise_phase_2";
    case EvalCondition::supine: return "supine";
    case EvalCondition::tripod: return "tripod";
  }
  return "?";
}

std::string_view short_label(EvalCondition c) {
  switch (c) {
    case EvalCondition::sit: return "Sit";
    case EvalCondition::exercise_phase_1: return "Ex_P1";
    case EvalCondition::exercise_phase_2: return "Ex_P2";
    case EvalCondition::supine: return "Supine";
    case EvalCondition::tripod: return "Tripod";
  }
  return "?";
}

std::optional<EvalCondition> eval_condition(const BeatTemplate& b, const SplitPlan& plan) {
  if (!plan.is_test(b)) return std::nullopt;
  switch (b.condition) {
    case Condition::sit: return EvalCondition::sit;
    case Condition::exercise:
      return b.source_time_s < kPhaseBoundaryS ? EvalCondition::exercise_phase_1 : EvalCondition::exercise_phase_2;
    case Condition::supine: return EvalCondition::supine;
    case Condition::tripod: return EvalCondition::tripod;
    case Condition::stand: return std::nullopt;
  }
  return std::nullopt;
}

PhaseSplit split_exercise_phases(std::span<const BeatTemplate> beats, double recording_duration_s,
                                 Diagnostics* diag) {
  PhaseSplit out;
  const bool short_rec = recording_duration_s < kPhaseBoundaryS + 1.0;
  if (short_rec)
    warn(diag, "exercise recording of " + std::to_string(recording_duration_s) +
                   " s is shorter than 61 s; every beat assigned to phase 1");
  for (const auto& b : beats) (short_rec || b.source_time_s < kPhaseBoundaryS ? out.phase1 : out.phase2).push_back(b);
  return out;
}

TrainValSplit stratified_split(std::span<const BeatTemplate> beats, double val_fraction, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_subject;
  for (std::size_t i = 0; i < beats.size(); ++i) by_subject[beats[i].subject_id].push_back(i);
  std::mt19937_64 rng(seed);
  TrainValSplit out;
  for (auto& [id, idx] : by_subject) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n = idx.size();
    std::size_t n_val = 0;
    if (n >= 2)
      n_val = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(n))),
                                      1, n - 1);
    out.val.insert(out.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    out.train.insert(out.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.val.begin(), out.val.end());
  return out;
}

std::optional<double> IdCounts::idr() const {
  if (total == 0) return std::nullopt;
  return static_cast<double>(correct) / static_cast<double>(total);
}

std::optional<double> IdCounts::fir() const {
  if (total == 0) return std::nullopt;
  return 1.0 - *idr();
}

IdCounts count_matches(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("prediction and label counts differ (" + std::to_string(predicted.size()) + " vs " +
                                std::to_string(truth.size()) + ")");
  IdCounts c;
  c.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++c.correct;
  return c;
}

std::optional<double> compute_idr(std::span<const int> predicted, std::span<const int> truth) {
  return count_matches(predicted, truth).idr();
}

ConditionSummary summarize(std::vector<IdCounts> per_run) {
  ConditionSummary s;
  s.per_run = std::move(per_run);
  std::vector<double> v;
  for (const auto& c : s.per_run)
    if (auto x = c.idr()) v.push_back(*x);
  if (v.empty()) return s;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  s.mean = mean;
  s.stddev = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return s;
}

namespace {

std::string method_label(const EvalReport& r) {
  return r.ablation_id + (r.classifier_augmented ? " (aug)" : "");
}

}  // namespace

std::string format_report_table(std::span<const EvalReport> reports) {
  std::size_t name_w = 6;
  for (const auto& r : reports) name_w = std::max(name_w, method_label(r).size());
  std::ostringstream os;
  char buf[64];
  os << std::string(name_w, ' ');
  for (auto c : kEvalConditions) {
    std::snprintf(buf, sizeof buf, " | %15s", std::string(short_label(c)).c_str());
    os << buf;
  }
  os << '\n' << std::string(name_w + kEvalConditions.size() * 18, '-') << '\n';
  for (const auto& r : reports) {
    const auto label = method_label(r);
    os << label << std::string(name_w - label.size(), ' ');
    for (auto c : kEvalConditions) {
      const auto& s = r.at(c);
      if (s.mean)
        std::snprintf(buf, sizeof buf, " | %6.2f +- %5.2f", 100.0 * *s.mean, 100.0 * *s.stddev);
      else
        std::snprintf(buf, sizeof buf, " | %15s", "absent");
      os << buf;
    }
    os << '\n';
  }
  return os.str();
}

std::string report_json(std::span<const EvalReport> reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["ablation_id"] = r.ablation_id;
    j["classifier_augmented"] = r.classifier_augmented;
    j["runs"] = r.runs;
    j["base_seed"] = r.base_seed;
    nlohmann::ordered_json conds;
    for (auto c : kEvalConditions) {
      const auto& s = r.at(c);
      nlohmann::ordered_json e;
      e["idr_mean"] = s.mean ? nlohmann::ordered_json(*s.mean) : nlohmann::ordered_json(nullptr);
      e["idr_std"] = s.stddev ? nlohmann::ordered_json(*s.stddev) : nlohmann::ordered_json(nullptr);
      e["fir_mean"] = s.mean ? nlohmann::ordered_json(1.0 - *s.mean) : nlohmann::ordered_json(nullptr);
      nlohmann::ordered_json runs = nlohmann::ordered_json::array();
      for (const auto& pr : s.per_run) runs.push_back({{"correct", pr.correct}, {"total", pr.total}});
      e["per_run"] = runs;
      conds[std::string(to_string(c))] = e;
    }
    j["conditions"] = conds;
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

}  // namespace ecgid
