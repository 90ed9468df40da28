#pragma once

#include "ecgid/augmentation.hpp"
#include "ecgid/nn/dual_expert.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ecgid {

// Per-subject ST-duration normalization target: the subject's fit evaluated
// at its mean training heart rate.
struct StNormalization {
  std::map<std::string, SubjectFit> fits;
  std::map<std::string, double> mean_train_hr;
};

// Unbalanced fits and mean heart rate over each subject's training beats.
StNormalization make_st_normalization(std::span<const BeatTemplate> training_beats);

struct FeatureTable {
  std::vector<std::string> subject_id;
  std::vector<Condition> condition;
  std::vector<std::vector<double>> features;
  std::vector<std::array<double, 2>> pca;  // empty unless requested
};

// Flattened backbone features, one row per beat. With `normalization`, every
// beat is first moved to its subject's normalized ST duration; beats of
// subjects without a fit pass through unchanged.
FeatureTable export_features(const nn::Sequential& backbone, nn::BeatSlice slice,
                             std::span<const BeatTemplate> beats, const StNormalization* normalization,
                             bool with_pca, Diagnostics* diag = nullptr);

// Scores on the two leading principal components of the centred rows. Each
// component's sign is fixed so that its largest-magnitude loading is positive.
std::vector<std::array<double, 2>> pca2(const std::vector<std::vector<double>>& rows);

// `subject_id,condition,f0..f{k-1}[,pc1,pc2]`
void write_feature_table(const std::filesystem::path& path, const FeatureTable& table);

}  // namespace ecgid
