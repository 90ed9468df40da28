#pragma once

#include "ecgid/augmentation.hpp"
#include "ecgid/evaluation.hpp"
#include "ecgid/nn/dual_expert.hpp"

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ecgid {

enum class Ablation { de_pada, no_de, no_pa, no_da, scr, acr };

// "DE-PADA", "DE-PADA\DE", "DE-PADA\PA", "DE-PADA\DA", "SCR", "ACR".
std::string_view to_string(Ablation a);
// Also accepts "no-DE", "no-PA", "no-DA" (case-insensitive).
Ablation parse_ablation(std::string_view text);

struct ExperimentConfig {
  SplitPlan split = SplitPlan::standard();
  nn::TrainConfig stage1;  // backbones and single-stage baselines
  nn::TrainConfig stage2;  // classifier head
  AugmentationConstants augmentation;
  AugmentOptions augment_options;
  int acr_t_min = 25;
  int acr_t_max = 80;  // clamped to augmentation.t_cap
  int runs = 10;
  std::uint64_t base_seed = 1;
  // Empty: subjects with exercise beats that lack a test condition.
  std::vector<std::string> auxiliary_subjects;
  std::set<std::string> excluded_subjects;

  void validate() const;
};

struct SubjectRoles {
  std::vector<std::string> target;
  std::vector<std::string> auxiliary;
};

// Subjects that have exercise recordings but miss one of the test
// (session, condition) pairs.
std::set<std::string> derive_auxiliary(const std::map<std::string, std::set<std::pair<Session, Condition>>>& seen,
                                       const SplitPlan& split);

// Preprocesses every recording and applies the corpus-level T-peak gate.
// Auxiliary subjects are derived from the recordings when `auxiliary` is empty.
std::vector<BeatTemplate> preprocess_corpus(std::span<const RawRecording> recordings, const FilterSpec& filter,
                                            const DetectionConfig& detection, std::set<std::string> auxiliary = {},
                                            const SplitPlan& split = SplitPlan::standard(),
                                            Diagnostics* diag = nullptr);

SubjectRoles assign_roles(std::span<const BeatTemplate> beats, const ExperimentConfig& cfg,
                          Diagnostics* diag = nullptr);

// Augmented copies of `beats` (originals first). Subjects without a range
// are passed through.
std::vector<BeatTemplate> augment_beats(std::span<const BeatTemplate> beats,
                                        std::span<const AugmentationRange> ranges, const AugmentOptions& options);

// Uniform range for every subject, clamped to the representable window.
std::vector<AugmentationRange> uniform_ranges(const std::vector<std::string>& subjects, int t_min, int t_max,
                                              const AugmentationConstants& consts);

// Full pipeline for one ablation, repeated cfg.runs times with run seed
// base_seed + run; each run re-draws the train/validation split and the model
// initialisation. Trained models are appended to `models` when given.
// ConfigError for classifier_augmented with \PA, SCR or ACR.
EvalReport run_experiment(Ablation ablation, bool classifier_augmented, std::span<const BeatTemplate> beats,
                          const ExperimentConfig& cfg, std::vector<nn::ExpertModel>* models = nullptr,
                          Diagnostics* diag = nullptr);

// DE-PADA, \DE, \PA, \DA under both classifier scenarios (8 rows). The \PA
// row of the augmented scenario repeats the non-augmented result, since \PA
// has no augmentation to enable.
std::vector<EvalReport> run_ablation_matrix(std::span<const BeatTemplate> beats, const ExperimentConfig& cfg,
                                            Diagnostics* diag = nullptr);

}  // namespace ecgid
