#include "ecgid/recording_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ecgid {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, res.ptr};
}

double parse_double(std::string_view text) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\r' || text.back() == '\t')) text.remove_suffix(1);
  if (text == "nan") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw std::invalid_argument("not a number: '" + std::string(text) + "'");
  return v;
}

std::string recording_stem(const RawRecording& rec) {
  return rec.subject_id + "_" + std::string(to_string(rec.session)) + "_" + std::string(to_string(rec.condition));
}

RawRecording read_recording(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open recording " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": missing header");
  if (!line.empty() && line.back() == '\r') line.pop_back();

  std::vector<std::string> fields;
  std::stringstream ss(line);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  if (fields.size() != 4)
    throw std::runtime_error(path.string() + ": header must be subject_id,session,condition,sample_rate_hz");

  RawRecording rec;
  rec.subject_id = fields[0];
  rec.session = parse_session(fields[1]);
  rec.condition = parse_condition(fields[2]);
  rec.sample_rate_hz = parse_double(fields[3]);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    try {
      rec.samples.push_back(parse_double(line));
    } catch (const std::invalid_argument&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad amplitude");
    }
  }
  rec.validate();
  return rec;
}

void write_recording(const fs::path& path, const RawRecording& rec) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << rec.subject_id << ',' << to_string(rec.session) << ',' << to_string(rec.condition) << ','
      << format_double(rec.sample_rate_hz) << '\n';
  for (double v : rec.samples) out << format_double(v) << '\n';
}

std::vector<RawRecording> read_recording_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".rec") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<RawRecording> recs;
  recs.reserve(files.size());
  for (const auto& f : files) recs.push_back(read_recording(f));
  return recs;
}

}  // namespace ecgid
