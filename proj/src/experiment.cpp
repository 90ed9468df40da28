#include "ecgid/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <map>

namespace ecgid {

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::de_pada: return "DE-PADA";
    case Ablation::no_de: return "DE-PADA\\DE";
    case Ablation::no_pa: return "DE-PADA\\PA";
    case Ablation::no_da: return "DE-PADA\\DA";
    case Ablation::scr: return "SCR";
    case Ablation::acr: return "ACR";
  }
  return "?";
}

Ablation parse_ablation(std::string_view text) {
  std::string t;
  for (char c : text) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (t == "DE-PADA") return Ablation::de_pada;
  if (t == "DE-PADA\\DE" || t == "NO-DE") return Ablation::no_de;
  if (t == "DE-PADA\\PA" || t == "NO-PA") return Ablation::no_pa;
  if (t == "DE-PADA\\DA" || t == "NO-DA") return Ablation::no_da;
  if (t == "SCR") return Ablation::scr;
  if (t == "ACR") return Ablation::acr;
  throw ConfigError("unknown ablation '" + std::string(text) +
                    "' (expected DE-PADA, DE-PADA\\DE, DE-PADA\\PA, DE-PADA\\DA, SCR or ACR)");
}

void ExperimentConfig::validate() const {
  split.validate();
  stage1.validate();
  stage2.validate();
  augmentation.validate();
  augment_options.validate();
  if (acr_t_min > acr_t_max) throw ConfigError("experiment.acr_t_min must not exceed experiment.acr_t_max");
  if (runs < 1) throw ConfigError("experiment.runs must be at least 1");
  for (const auto& a : auxiliary_subjects)
    if (excluded_subjects.count(a)) throw ConfigError("subject " + a + " is both auxiliary and excluded");
}

std::set<std::string> derive_auxiliary(const std::map<std::string, std::set<std::pair<Session, Condition>>>& seen,
                                       const SplitPlan& split) {
  std::set<std::string> aux;
  for (const auto& [id, pairs] : seen) {
    const bool has_exercise =
        std::any_of(pairs.begin(), pairs.end(), [](const auto& p) { return p.second == Condition::exercise; });
    const bool all_tests =
        std::all_of(split.test.begin(), split.test.end(), [&](const auto& p) { return pairs.count(p) != 0; });
    if (has_exercise && !all_tests) aux.insert(id);
  }
  return aux;
}

std::vector<BeatTemplate> preprocess_corpus(std::span<const RawRecording> recordings, const FilterSpec& filter,
                                            const DetectionConfig& detection, std::set<std::string> auxiliary,
                                            const SplitPlan& split, Diagnostics* diag) {
  if (auxiliary.empty()) {
    std::map<std::string, std::set<std::pair<Session, Condition>>> seen;
    for (const auto& r : recordings) seen[r.subject_id].insert({r.session, r.condition});
    auxiliary = derive_auxiliary(seen, split);
  }
  std::vector<BeatTemplate> beats;
  for (const auto& r : recordings) {
    auto b = preprocess_recording(r, filter, detection, diag);
    beats.insert(beats.end(), std::make_move_iterator(b.begin()), std::make_move_iterator(b.end()));
  }
  return gate_corpus_t_peaks(std::move(beats), auxiliary, detection, diag);
}

SubjectRoles assign_roles(std::span<const BeatTemplate> beats, const ExperimentConfig& cfg, Diagnostics* diag) {
  std::map<std::string, std::set<std::pair<Session, Condition>>> seen;
  for (const auto& b : beats)
    if (!cfg.excluded_subjects.count(b.subject_id)) seen[b.subject_id].insert({b.session, b.condition});

  SubjectRoles roles;
  std::set<std::string> aux(cfg.auxiliary_subjects.begin(), cfg.auxiliary_subjects.end());
  if (aux.empty()) aux = derive_auxiliary(seen, cfg.split);
  for (const auto& id : aux) {
    if (!seen.count(id)) {
      warn(diag, "auxiliary subject " + id + " has no beats");
      continue;
    }
    roles.auxiliary.push_back(id);
  }
  for (const auto& [id, pairs] : seen) {
    if (aux.count(id)) continue;
    const bool trains =
        std::any_of(pairs.begin(), pairs.end(), [&](const auto& p) { return cfg.split.train.count(p); });
    if (trains)
      roles.target.push_back(id);
    else
      warn(diag, "subject " + id + " has no training beats and is ignored");
  }
  return roles;
}

std::vector<BeatTemplate> augment_beats(std::span<const BeatTemplate> beats,
                                        std::span<const AugmentationRange> ranges, const AugmentOptions& options) {
  std::map<std::string, std::vector<BeatTemplate>> by_subject;
  std::vector<std::string> order;
  for (const auto& b : beats) {
    if (!by_subject.count(b.subject_id)) order.push_back(b.subject_id);
    by_subject[b.subject_id].push_back(b);
  }
  std::map<std::string, AugmentationRange> range_of;
  for (const auto& r : ranges) range_of[r.subject_id] = r;

  std::vector<BeatTemplate> originals(beats.begin(), beats.end());
  std::vector<BeatTemplate> extra;
  for (const auto& id : order) {
    auto it = range_of.find(id);
    if (it == range_of.end()) continue;
    auto res = augment_subject(by_subject[id], it->second, options);
    const auto n = by_subject[id].size();
    extra.insert(extra.end(), std::make_move_iterator(res.beats.begin() + static_cast<std::ptrdiff_t>(n)),
                 std::make_move_iterator(res.beats.end()));
  }
  originals.insert(originals.end(), std::make_move_iterator(extra.begin()), std::make_move_iterator(extra.end()));
  return originals;
}

std::vector<AugmentationRange> uniform_ranges(const std::vector<std::string>& subjects, int t_min, int t_max,
                                              const AugmentationConstants& consts) {
  std::vector<AugmentationRange> out;
  const int hi = std::min(t_max, consts.t_cap);
  const int lo = std::min(t_min, hi);
  for (const auto& id : subjects) out.push_back({id, lo, hi});
  return out;
}

namespace {

std::vector<BeatTemplate> pick(std::span<const BeatTemplate> beats, const std::vector<std::size_t>& idx) {
  std::vector<BeatTemplate> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(beats[i]);
  return out;
}

bool uses_augmentation(Ablation a) { return a != Ablation::no_pa && a != Ablation::scr; }
bool is_baseline(Ablation a) { return a == Ablation::scr || a == Ablation::acr; }

}  // namespace

EvalReport run_experiment(Ablation ablation, bool classifier_augmented, std::span<const BeatTemplate> beats,
                          const ExperimentConfig& cfg, std::vector<nn::ExpertModel>* models, Diagnostics* diag) {
  cfg.validate();
  if (classifier_augmented && (ablation == Ablation::no_pa || is_baseline(ablation)))
    throw ConfigError(std::string(to_string(ablation)) +
                      " cannot be combined with an augmented classifier: it has no two-stage classifier to augment");

  const SubjectRoles roles = assign_roles(beats, cfg, diag);
  if (roles.target.size() < 2) throw ConfigError("need at least two target subjects with training beats");
  const bool with_aux = !is_baseline(ablation) && ablation != Ablation::no_da && !roles.auxiliary.empty();
  if (!is_baseline(ablation) && ablation != Ablation::no_da && roles.auxiliary.empty())
    warn(diag, "no auxiliary subjects available; domain adaptation has no effect");
  const nn::LabelMap labels(roles.target, with_aux ? roles.auxiliary : std::vector<std::string>{});
  const std::set<std::string> target_set(roles.target.begin(), roles.target.end());
  const std::set<std::string> aux_set(roles.auxiliary.begin(), roles.auxiliary.end());

  std::vector<BeatTemplate> train_pool, aux_pool;
  std::array<std::vector<BeatTemplate>, 5> test;
  for (const auto& b : beats) {
    if (b.augmented) continue;
    if (target_set.count(b.subject_id)) {
      if (cfg.split.is_train(b))
        train_pool.push_back(b);
      else if (auto c = eval_condition(b, cfg.split))
        test[static_cast<std::size_t>(*c)].push_back(b);
    } else if (with_aux && aux_set.count(b.subject_id)) {
      aux_pool.push_back(b);
    }
  }

  std::vector<AugmentationRange> ranges;
  if (ablation == Ablation::acr)
    ranges = uniform_ranges(roles.target, cfg.acr_t_min, cfg.acr_t_max, cfg.augmentation);
  else if (uses_augmentation(ablation))
    ranges = compute_subject_ranges(train_pool, cfg.augmentation, diag).ranges;

  std::array<nn::Tensor, 5> test_x;
  std::array<std::vector<int>, 5> test_y;
  for (std::size_t c = 0; c < test.size(); ++c) {
    test_x[c] = nn::beats_to_tensor(test[c], nn::kFullSlice);
    for (const auto& b : test[c]) test_y[c].push_back(labels.label(b.subject_id));
  }

  std::array<std::vector<IdCounts>, 5> per_run;
  for (int run = 0; run < cfg.runs; ++run) {
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(run);
    const auto split = stratified_split(train_pool, cfg.split.val_fraction, seed);
    const auto genuine_train = pick(train_pool, split.train);
    const auto genuine_val = pick(train_pool, split.val);
    const auto aug_train = ranges.empty() ? genuine_train : augment_beats(genuine_train, ranges, cfg.augment_options);
    const auto aug_val = ranges.empty() ? genuine_val : augment_beats(genuine_val, ranges, cfg.augment_options);

    nn::TrainConfig c1 = cfg.stage1;
    c1.seed = seed;
    nn::TrainConfig c2 = cfg.stage2;
    c2.seed = seed;

    nn::ExpertModel model;
    if (is_baseline(ablation)) {
      model = nn::train_standard_cnn(nn::make_beat_set(aug_train, labels), nn::make_beat_set(aug_val, labels),
                                     labels.num_target(), c1, seed);
    } else {
      std::vector<nn::BeatSlice> slices = ablation == Ablation::no_de
                                              ? std::vector<nn::BeatSlice>{nn::kFullSlice}
                                              : std::vector<nn::BeatSlice>{nn::kPqrsSlice, nn::kStSlice};
      auto stage1 = nn::train_stage1(nn::make_beat_set(aug_train, labels), nn::make_beat_set(aug_val, labels),
                                     slices, labels.num_target(), c1, seed);

      std::vector<BeatTemplate> head_train = classifier_augmented ? aug_train : genuine_train;
      std::vector<BeatTemplate> head_val = classifier_augmented ? aug_val : genuine_val;
      if (with_aux) {
        const auto aux_split = stratified_split(aux_pool, cfg.split.val_fraction, seed);
        for (auto i : aux_split.train) head_train.push_back(aux_pool[i]);
        for (auto i : aux_split.val) head_val.push_back(aux_pool[i]);
      }
      model = nn::train_stage2(std::move(stage1.backbones), slices, nn::make_beat_set(head_train, labels),
                               nn::make_beat_set(head_val, labels), labels.num_target(), labels.num_aux(), c2,
                               seed + 1000);
      model.histories.insert(model.histories.begin(), stage1.histories.begin(), stage1.histories.end());
      nn::prune_aux_classes(model, labels.num_target());
    }

    for (std::size_t c = 0; c < test.size(); ++c) {
      if (test[c].empty()) {
        per_run[c].push_back({});
        continue;
      }
      per_run[c].push_back(count_matches(model.predict(test_x[c]), test_y[c]));
    }
    if (models) models->push_back(std::move(model));
  }

  EvalReport report;
  report.ablation_id = std::string(to_string(ablation));
  report.classifier_augmented = classifier_augmented;
  report.runs = cfg.runs;
  report.base_seed = cfg.base_seed;
  for (std::size_t c = 0; c < per_run.size(); ++c) {
    report.conditions[c] = summarize(std::move(per_run[c]));
    if (!report.conditions[c].mean)
      warn(diag, std::string(to_string(ablation)) + ": no test beats for " +
                     std::string(to_string(kEvalConditions[c])));
  }
  return report;
}

std::vector<EvalReport> run_ablation_matrix(std::span<const BeatTemplate> beats, const ExperimentConfig& cfg,
                                            Diagnostics* diag) {
  std::vector<EvalReport> rows;
  const Ablation configs[] = {Ablation::de_pada, Ablation::no_de, Ablation::no_pa, Ablation::no_da};
  for (bool augmented : {false, true}) {
    for (Ablation a : configs) {
      if (augmented && a == Ablation::no_pa) {
        EvalReport r = rows[2];
        r.classifier_augmented = true;
        rows.push_back(std::move(r));
        continue;
      }
      rows.push_back(run_experiment(a, augmented, beats, cfg, nullptr, diag));
    }
  }
  return rows;
}

}  // namespace ecgid
