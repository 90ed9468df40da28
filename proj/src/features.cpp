#include "ecgid/features.hpp"

#include "ecgid/recording_io.hpp"

#include <Eigen/Dense>

#include <fstream>

namespace ecgid {

StNormalization make_st_normalization(std::span<const BeatTemplate> training_beats) {
  std::map<std::string, std::vector<BeatTemplate>> by_subject;
  for (const auto& b : training_beats)
    if (!b.augmented) by_subject[b.subject_id].push_back(b);
  StNormalization out;
  for (const auto& [id, beats] : by_subject) {
    SubjectFit fit = fit_tpeak_vs_hr(beats, FitKind::unbalanced);
    fit.subject_id = id;
    double hr = 0.0;
    for (const auto& b : beats) hr += b.heart_rate_bpm;
    out.mean_train_hr[id] = hr / static_cast<double>(beats.size());
    if (!fit.degenerate) out.fits[id] = fit;
  }
  return out;
}

FeatureTable export_features(const nn::Sequential& backbone, nn::BeatSlice slice,
                             std::span<const BeatTemplate> beats, const StNormalization* normalization,
                             bool with_pca, Diagnostics* diag) {
  std::vector<BeatTemplate> input;
  if (normalization) {
    std::map<std::string, std::vector<BeatTemplate>> by_subject;
    std::vector<std::string> order;
    for (const auto& b : beats) {
      if (!by_subject.count(b.subject_id)) order.push_back(b.subject_id);
      by_subject[b.subject_id].push_back(b);
    }
    for (const auto& id : order) {
      auto fit = normalization->fits.find(id);
      auto hr = normalization->mean_train_hr.find(id);
      if (fit == normalization->fits.end() || hr == normalization->mean_train_hr.end()) {
        warn(diag, "no ST normalization for " + id + "; beats exported unchanged");
        input.insert(input.end(), by_subject[id].begin(), by_subject[id].end());
        continue;
      }
      auto norm = normalize_st_duration(by_subject[id], fit->second, hr->second, diag);
      input.insert(input.end(), norm.begin(), norm.end());
    }
  } else {
    input.assign(beats.begin(), beats.end());
  }

  FeatureTable table;
  const nn::Tensor x = nn::beats_to_tensor(input, slice);
  const nn::Tensor f = backbone.infer_logits(x);
  for (std::size_t i = 0; i < input.size(); ++i) {
    table.subject_id.push_back(input[i].subject_id);
    table.condition.push_back(input[i].condition);
    const auto row = f.sample(i);
    table.features.emplace_back(row.begin(), row.end());
  }
  if (with_pca) table.pca = pca2(table.features);
  return table;
}

std::vector<std::array<double, 2>> pca2(const std::vector<std::vector<double>>& rows) {
  std::vector<std::array<double, 2>> out(rows.size(), {0.0, 0.0});
  if (rows.size() < 2) return out;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  m.rowwise() -= m.colwise().mean();
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, v.cols()); ++k) {
    Eigen::VectorXd axis = v.col(k);
    Eigen::Index arg;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis(arg) < 0) axis = -axis;
    const Eigen::VectorXd scores = m * axis;
    for (Eigen::Index i = 0; i < n; ++i) out[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)] = scores(i);
  }
  return out;
}

void write_feature_table(const std::filesystem::path& path, const FeatureTable& table) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "subject_id,condition";
  const std::size_t width = table.features.empty() ? 0 : table.features.front().size();
  for (std::size_t j = 0; j < width; ++j) os << ",f" << j;
  if (!table.pca.empty()) os << ",pc1,pc2";
  os << '\n';
  for (std::size_t i = 0; i < table.features.size(); ++i) {
    os << table.subject_id[i] << ',' << to_string(table.condition[i]);
    for (double v : table.features[i]) os << ',' << format_double(v);
    if (!table.pca.empty()) os << ',' << format_double(table.pca[i][0]) << ',' << format_double(table.pca[i][1]);
    os << '\n';
  }
}

}  // namespace ecgid
