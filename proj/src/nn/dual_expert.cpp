#include "ecgid/nn/dual_expert.hpp"

#include "ecgid/signal.hpp"

#include <algorithm>
#include <stdexcept>

namespace ecgid::nn {

Tensor beats_to_tensor(std::span<const BeatTemplate> beats, BeatSlice slice) {
  const auto len = static_cast<std::size_t>(slice.length);
  Tensor t(beats.size(), 1, len);
  for (std::size_t i = 0; i < beats.size(); ++i) {
    const auto& s = beats[i].samples;
    if (slice.begin < 0 || static_cast<std::size_t>(slice.begin) + len > s.size())
      throw std::invalid_argument("beat of " + std::to_string(s.size()) + " samples does not contain the slice");
    std::copy_n(s.begin() + slice.begin, len, t.sample(i).begin());
  }
  return t;
}

Tensor slice_beats(const Tensor& beats, BeatSlice slice) {
  if (beats.channels != 1 || slice.begin < 0 ||
      static_cast<std::size_t>(slice.begin + slice.length) > beats.length)
    throw std::invalid_argument("slice_beats: slice outside the beat tensor " + to_string(beats.sample_shape()));
  if (slice.begin == 0 && static_cast<std::size_t>(slice.length) == beats.length) return beats;
  const auto len = static_cast<std::size_t>(slice.length);
  Tensor t(beats.batch, 1, len);
  for (std::size_t i = 0; i < beats.batch; ++i)
    std::copy_n(beats.sample(i).begin() + slice.begin, len, t.sample(i).begin());
  return t;
}

LabelMap::LabelMap(std::vector<std::string> target, std::vector<std::string> aux)
    : target_(std::move(target)), aux_(std::move(aux)) {
  std::sort(target_.begin(), target_.end());
  target_.erase(std::unique(target_.begin(), target_.end()), target_.end());
  std::sort(aux_.begin(), aux_.end());
  aux_.erase(std::unique(aux_.begin(), aux_.end()), aux_.end());
  int k = 0;
  for (const auto& id : target_) index_[id] = k++;
  for (const auto& id : aux_) {
    if (index_.count(id)) throw ConfigError("subject " + id + " is listed as both target and auxiliary");
    index_[id] = k++;
  }
}

int LabelMap::label(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw std::invalid_argument("subject " + id + " has no class label");
  return it->second;
}

const std::string& LabelMap::subject(int label) const {
  if (label < 0 || label >= num_classes()) throw std::out_of_range("class label out of range");
  return label < num_target() ? target_[static_cast<std::size_t>(label)]
                              : aux_[static_cast<std::size_t>(label - num_target())];
}

BeatSet make_beat_set(std::span<const BeatTemplate> beats, const LabelMap& labels) {
  BeatSet set;
  set.beats = beats_to_tensor(beats, kFullSlice);
  set.labels.reserve(beats.size());
  for (const auto& b : beats) set.labels.push_back(labels.label(b.subject_id));
  return set;
}

namespace {

Tensor backbone_features(const std::vector<Sequential>& backbones, std::span<const BeatSlice> slices,
                         const Tensor& beats) {
  std::vector<Tensor> parts;
  for (std::size_t k = 0; k < backbones.size(); ++k)
    parts.push_back(backbones[k].infer_logits(slice_beats(beats, slices[k])));
  return concat_features(parts);
}

}  // namespace

std::size_t ExpertModel::feature_width() const {
  std::size_t w = 0;
  for (const auto& b : backbones) w += b.output_shape().size();
  return w;
}

Tensor ExpertModel::features(const Tensor& beats) const { return backbone_features(backbones, slices, beats); }

Tensor ExpertModel::logits(const Tensor& beats) const { return head.infer_logits(features(beats)); }

Tensor ExpertModel::probabilities(const Tensor& beats) const { return softmax_rows(logits(beats)); }

std::vector<int> ExpertModel::predict(const Tensor& beats) const { return nn::predict(head, features(beats)); }

StageOneResult train_stage1(const BeatSet& train_set, const BeatSet& val_set, std::span<const BeatSlice> slices,
                            int num_classes, const TrainConfig& cfg, std::uint64_t seed) {
  StageOneResult out;
  for (std::size_t k = 0; k < slices.size(); ++k) {
    Sequential model = build_standard_cnn(slices[k].length, num_classes, seed + k, cfg.head);
    TrainConfig c = cfg;
    c.seed = cfg.seed + k;
    out.histories.push_back(train(model, {slice_beats(train_set.beats, slices[k]), train_set.labels},
                                  {slice_beats(val_set.beats, slices[k]), val_set.labels}, c));
    model.truncate(kBackboneLayers);
    model.freeze_all();
    out.backbones.push_back(std::move(model));
  }
  return out;
}

ExpertModel train_stage2(std::vector<Sequential> backbones, std::span<const BeatSlice> slices,
                         const BeatSet& train_set, const BeatSet& val_set, int num_target, int num_aux,
                         const TrainConfig& cfg, std::uint64_t seed) {
  if (backbones.size() != slices.size() || backbones.empty())
    throw std::invalid_argument("train_stage2: one backbone per slice required");
  for (const auto& b : backbones)
    if (b.any_trainable()) throw std::invalid_argument("train_stage2: backbones must be frozen");
  if (num_target < 1 || num_aux < 0) throw ConfigError("train_stage2: need at least one target class");

  ExpertModel m;
  m.slices.assign(slices.begin(), slices.end());
  m.num_target = num_target;
  m.num_aux = num_aux;
  const Tensor train_x = backbone_features(backbones, slices, train_set.beats);
  const Tensor val_x = backbone_features(backbones, slices, val_set.beats);
  const auto width = static_cast<int>(train_x.channels);
  m.head = Sequential({train_x.channels, 1}, classifier_head(width, num_target + num_aux, cfg.head), seed);
  m.backbones = std::move(backbones);
  m.histories.push_back(train(m.head, {train_x, train_set.labels}, {val_x, val_set.labels}, cfg));
  return m;
}

ExpertModel train_standard_cnn(const BeatSet& train_set, const BeatSet& val_set, int num_classes,
                               const TrainConfig& cfg, std::uint64_t seed) {
  Sequential model = build_standard_cnn(kFullSlice.length, num_classes, seed, cfg.head);
  ExpertModel m;
  m.slices = {kFullSlice};
  m.num_target = num_classes;
  m.histories.push_back(train(model, {train_set.beats, train_set.labels}, {val_set.beats, val_set.labels}, cfg));
  m.head = model.tail(kBackboneLayers);
  model.truncate(kBackboneLayers);
  model.freeze_all();
  m.backbones.push_back(std::move(model));
  return m;
}

void prune_aux_classes(Sequential& head, int num_target) {
  for (std::size_t i = head.size(); i-- > 0;) {
    if (head.layer(i).spec().kind != LayerKind::fully_connected) continue;
    auto& fc = dynamic_cast<FullyConnected&>(head.layer(i));
    const int width = fc.spec().out_channels;
    if (num_target < 1 || num_target > width)
      throw std::invalid_argument("prune_aux_classes: num_target " + std::to_string(num_target) +
                                  " exceeds head width " + std::to_string(width));
    if (num_target < width) fc.truncate_outputs(num_target);
    return;
  }
  throw std::invalid_argument("prune_aux_classes: head has no fully connected layer");
}

void prune_aux_classes(ExpertModel& model, int num_target) {
  prune_aux_classes(model.head, num_target);
  model.num_aux = 0;
  model.num_target = num_target;
}

}  // namespace ecgid::nn
