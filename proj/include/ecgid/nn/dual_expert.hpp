#pragma once

#include "ecgid/beats.hpp"
#include "ecgid/nn/trainer.hpp"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace ecgid::nn {

// In-beat sample window fed to one backbone.
struct BeatSlice {
  int begin = 0;
  int length = 110;

  bool operator==(const BeatSlice&) const = default;
};

inline constexpr BeatSlice kPqrsSlice{0, 50};
inline constexpr BeatSlice kStSlice{40, 70};
inline constexpr BeatSlice kFullSlice{0, 110};

// (n, 1, slice.length) tensor of the sliced beats.
Tensor beats_to_tensor(std::span<const BeatTemplate> beats, BeatSlice slice);
Tensor slice_beats(const Tensor& beats, BeatSlice slice);

// Subject id -> class index. Target subjects occupy [0, num_target), auxiliary
// subjects follow, each block in sorted id order.
class LabelMap {
 public:
  LabelMap() = default;
  // ConfigError when a subject is in both lists.
  LabelMap(std::vector<std::string> target, std::vector<std::string> aux);

  int num_target() const { return static_cast<int>(target_.size()); }
  int num_aux() const { return static_cast<int>(aux_.size()); }
  int num_classes() const { return num_target() + num_aux(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  int label(const std::string& id) const;
  const std::string& subject(int label) const;
  const std::vector<std::string>& target() const { return target_; }
  const std::vector<std::string>& aux() const { return aux_; }

 private:
  std::vector<std::string> target_, aux_;
  std::map<std::string, int> index_;
};

// Beats (n, 1, 110) with class labels.
struct BeatSet {
  Tensor beats;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

BeatSet make_beat_set(std::span<const BeatTemplate> beats, const LabelMap& labels);

// Frozen backbones over beat slices, their flattened features concatenated
// and fed to a classifier head. One slice of the full beat is the standard
// CNN; the PQRS and ST slices make the dual expert.
struct ExpertModel {
  std::vector<BeatSlice> slices;
  std::vector<Sequential> backbones;
  Sequential head;
  int num_target = 0;
  int num_aux = 0;
  std::vector<TrainHistory> histories;  // per backbone, then the head

  std::size_t feature_width() const;
  Tensor features(const Tensor& beats) const;
  Tensor logits(const Tensor& beats) const;
  Tensor probabilities(const Tensor& beats) const;
  std::vector<int> predict(const Tensor& beats) const;
};

struct StageOneResult {
  std::vector<Sequential> backbones;  // truncated after flatten and frozen
  std::vector<TrainHistory> histories;
};

// Trains one standard CNN per slice to classify `num_classes` subjects, then
// drops the fully connected layers and freezes what remains. Backbone k is
// seeded with seed + k.
StageOneResult train_stage1(const BeatSet& train_set, const BeatSet& val_set, std::span<const BeatSlice> slices,
                            int num_classes, const TrainConfig& cfg, std::uint64_t seed);

// Trains a fresh head with num_target + num_aux outputs on the concatenated
// features of the frozen backbones.
ExpertModel train_stage2(std::vector<Sequential> backbones, std::span<const BeatSlice> slices,
                         const BeatSet& train_set, const BeatSet& val_set, int num_target, int num_aux,
                         const TrainConfig& cfg, std::uint64_t seed);

// Single-stage standard CNN on whole beats, stored as backbone + head.
ExpertModel train_standard_cnn(const BeatSet& train_set, const BeatSet& val_set, int num_classes,
                               const TrainConfig& cfg, std::uint64_t seed);

// Keeps the first num_target outputs of the head.
void prune_aux_classes(ExpertModel& model, int num_target);
void prune_aux_classes(Sequential& head, int num_target);

}  // namespace ecgid::nn
