#include "ecgid/beat_io.hpp"

#include "ecgid/recording_io.hpp"

#include <fstream>
#include <sstream>

namespace ecgid {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMetaColumns = 6;

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

void write_beats(const fs::path& path, const std::vector<BeatTemplate>& beats, bool with_augmented_flag) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::size_t len = beats.empty() ? 110 : beats.front().samples.size();
  out << "subject_id,session,condition,heart_rate_bpm,t_peak_rel_r,source_time_s";
  for (std::size_t i = 0; i < len; ++i) out << ",s" << i;
  if (with_augmented_flag) out << ",augmented";
  out << '\n';
  for (const auto& b : beats) {
    if (b.samples.size() != len) throw std::invalid_argument("write_beats: beats differ in length");
    out << b.subject_id << ',' << to_string(b.session) << ',' << to_string(b.condition) << ','
        << format_double(b.heart_rate_bpm) << ',' << b.t_peak_rel_r << ',' << format_double(b.source_time_s);
    for (double v : b.samples) out << ',' << format_double(v);
    if (with_augmented_flag) out << ',' << (b.augmented ? 1 : 0);
    out << '\n';
  }
}

std::vector<BeatTemplate> read_beats(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open beat file " + path.string());
  std::string line;
  if (!std::getline(in, line)) return {};
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_csv(line);
  if (header.size() < kMetaColumns + 2 || header[0] != "subject_id")
    throw std::runtime_error(path.string() + ": missing beat dataset header");
  const bool has_flag = header.back() == "augmented";
  const std::size_t n_samples = header.size() - kMetaColumns - (has_flag ? 1 : 0);

  std::vector<BeatTemplate> beats;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != header.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(header.size()) + " columns");
    try {
      BeatTemplate b;
      b.subject_id = std::string(f[0]);
      b.session = parse_session(f[1]);
      b.condition = parse_condition(f[2]);
      b.heart_rate_bpm = parse_double(f[3]);
      b.t_peak_rel_r = static_cast<int>(parse_double(f[4]));
      b.source_time_s = parse_double(f[5]);
      b.samples.reserve(n_samples);
      for (std::size_t i = 0; i < n_samples; ++i) b.samples.push_back(parse_double(f[kMetaColumns + i]));
      if (has_flag) b.augmented = parse_double(f.back()) != 0.0;
      b.sample_rate_hz = 200.0;
      b.r_index = b.geometry().r_index;
      beats.push_back(std::move(b));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return beats;
}

}  // namespace ecgid
