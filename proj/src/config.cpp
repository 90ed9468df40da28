#include "ecgid/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace ecgid {

namespace {

using json = nlohmann::ordered_json;

constexpr const char* kPublished = "published";
constexpr const char* kChosen = "toolkit choice";
constexpr const char* kDerived = "derived from the beat geometry";

enum class Kind { integer, unsigned_integer, real, boolean, string, string_list };

struct Field {
  const char* section;
  const char* key;
  const char* provenance;
  Kind kind;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
Field field(const char* section, const char* key, const char* provenance, T& (*ref)(RunConfig&)) {
  Kind kind;
  if constexpr (std::is_same_v<T, bool>)
    kind = Kind::boolean;
  else if constexpr (std::is_same_v<T, std::string>)
    kind = Kind::string;
  else if constexpr (std::is_same_v<T, std::vector<std::string>>)
    kind = Kind::string_list;
  else if constexpr (std::is_floating_point_v<T>)
    kind = Kind::real;
  else if constexpr (std::is_unsigned_v<T>)
    kind = Kind::unsigned_integer;
  else
    kind = Kind::integer;
  return Field{section, key, provenance, kind,
               [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); },
               [ref](RunConfig& c, const json& j) { ref(c) = j.get<T>(); }};
}

template <int Stage>
nn::TrainConfig& stage(RunConfig& c) {
  return Stage == 1 ? c.experiment.stage1 : c.experiment.stage2;
}

template <int Stage>
void add_train_fields(std::vector<Field>& f, const char* s) {
  f.push_back(field<double>(s, "learning_rate", kPublished, [](RunConfig& c) -> double& { return stage<Stage>(c).learning_rate; }));
  f.push_back(field<double>(s, "beta1", kChosen, [](RunConfig& c) -> double& { return stage<Stage>(c).beta1; }));
  f.push_back(field<double>(s, "beta2", kChosen, [](RunConfig& c) -> double& { return stage<Stage>(c).beta2; }));
  f.push_back(field<double>(s, "epsilon", kChosen, [](RunConfig& c) -> double& { return stage<Stage>(c).epsilon; }));
  f.push_back(field<std::size_t>(s, "batch_size", kChosen, [](RunConfig& c) -> std::size_t& { return stage<Stage>(c).batch_size; }));
  f.push_back(field<int>(s, "max_epochs", kChosen, [](RunConfig& c) -> int& { return stage<Stage>(c).max_epochs; }));
  f.push_back(field<int>(s, "patience", kPublished, [](RunConfig& c) -> int& { return stage<Stage>(c).patience; }));
}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = [] {
    std::vector<Field> v;
    v.push_back(field<int>("filter", "order", kPublished, [](RunConfig& c) -> int& { return c.filter.order; }));
    v.push_back(field<double>("filter", "low_cut_hz", kPublished, [](RunConfig& c) -> double& { return c.filter.low_cut_hz; }));
    v.push_back(field<double>("filter", "high_cut_hz", kPublished, [](RunConfig& c) -> double& { return c.filter.high_cut_hz; }));
    v.push_back(field<bool>("filter", "zero_phase", kChosen, [](RunConfig& c) -> bool& { return c.filter.zero_phase; }));

    v.push_back(field<int>("detection", "averaging_window", kPublished, [](RunConfig& c) -> int& { return c.detection.averaging_window; }));
    v.push_back(field<double>("detection", "zscore_threshold", kPublished, [](RunConfig& c) -> double& { return c.detection.zscore_threshold; }));
    v.push_back(field<double>("detection", "iqr_factor", kChosen, [](RunConfig& c) -> double& { return c.detection.iqr_factor; }));
    v.push_back(field<bool>("detection", "per_subject_tpeak_pooling", kChosen, [](RunConfig& c) -> bool& { return c.detection.per_subject_tpeak_pooling; }));

    v.push_back(field<double>("augmentation", "hr_limit", kPublished, [](RunConfig& c) -> double& { return c.experiment.augmentation.hr_limit; }));
    v.push_back(field<int>("augmentation", "t_global_min", kPublished, [](RunConfig& c) -> int& { return c.experiment.augmentation.t_global_min; }));
    v.push_back(field<int>("augmentation", "t_physio_min", kPublished, [](RunConfig& c) -> int& { return c.experiment.augmentation.t_physio_min; }));
    v.push_back(field<int>("augmentation", "t_cap", kDerived, [](RunConfig& c) -> int& { return c.experiment.augmentation.t_cap; }));
    v.push_back(field<bool>("augmentation", "median_over_all_beats", kChosen, [](RunConfig& c) -> bool& { return c.experiment.augmentation.median_over_all_beats; }));
    v.push_back(field<int>("augmentation", "source_stride", kChosen, [](RunConfig& c) -> int& { return c.experiment.augment_options.source_stride; }));
    v.push_back(field<int>("augmentation", "t_step", kChosen, [](RunConfig& c) -> int& { return c.experiment.augment_options.t_step; }));
    v.push_back(field<int>("augmentation", "acr_t_min", kPublished, [](RunConfig& c) -> int& { return c.experiment.acr_t_min; }));
    v.push_back(field<int>("augmentation", "acr_t_max", kPublished, [](RunConfig& c) -> int& { return c.experiment.acr_t_max; }));

    v.push_back(field<int>("architecture", "hidden_units", kChosen, [](RunConfig& c) -> int& { return c.experiment.stage1.head.hidden_units; }));
    v.push_back(field<double>("architecture", "dropout", kChosen, [](RunConfig& c) -> double& { return c.experiment.stage1.head.dropout; }));

    add_train_fields<1>(v, "stage1");
    add_train_fields<2>(v, "stage2");

    v.push_back(field<double>("split", "val_fraction", kPublished, [](RunConfig& c) -> double& { return c.experiment.split.val_fraction; }));

    v.push_back(field<int>("evaluation", "runs", kPublished, [](RunConfig& c) -> int& { return c.experiment.runs; }));
    v.push_back(field<std::uint64_t>("evaluation", "base_seed", kChosen, [](RunConfig& c) -> std::uint64_t& { return c.experiment.base_seed; }));
    v.push_back(field<std::vector<std::string>>("evaluation", "auxiliary_subjects", kChosen, [](RunConfig& c) -> std::vector<std::string>& { return c.experiment.auxiliary_subjects; }));
    v.push_back(field<std::string>("evaluation", "exclusion_list", kChosen, [](RunConfig& c) -> std::string& { return c.exclusion_list; }));

    v.push_back(field<int>("synth", "target_subjects", kChosen, [](RunConfig& c) -> int& { return c.synth.target_subjects; }));
    v.push_back(field<int>("synth", "auxiliary_subjects", kChosen, [](RunConfig& c) -> int& { return c.synth.auxiliary_subjects; }));
    v.push_back(field<double>("synth", "rest_duration_s", kChosen, [](RunConfig& c) -> double& { return c.synth.rest_duration_s; }));
    v.push_back(field<double>("synth", "exercise_duration_s", kPublished, [](RunConfig& c) -> double& { return c.synth.exercise_duration_s; }));
    v.push_back(field<double>("synth", "snr_db", kChosen, [](RunConfig& c) -> double& { return c.synth.snr_db; }));
    v.push_back(field<std::uint64_t>("synth", "seed", kChosen, [](RunConfig& c) -> std::uint64_t& { return c.synth.seed; }));
    v.push_back(field<double>("synth", "min_distance", kChosen, [](RunConfig& c) -> double& { return c.synth.min_distance; }));
    return v;
  }();
  return f;
}

const Field* find_field(std::string_view section, std::string_view key) {
  for (const Field& f : fields())
    if (section == f.section && key == f.key) return &f;
  return nullptr;
}

bool kind_matches(Kind kind, const json& j) {
  switch (kind) {
    case Kind::integer:
      return j.is_number_integer();
    case Kind::unsigned_integer:
      return j.is_number_unsigned();
    case Kind::real:
      return j.is_number();
    case Kind::boolean:
      return j.is_boolean();
    case Kind::string:
      return j.is_string();
    case Kind::string_list:
      return j.is_array() && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_string(); });
  }
  return false;
}

std::string_view kind_name(Kind kind) {
  switch (kind) {
    case Kind::integer:
      return "an integer";
    case Kind::unsigned_integer:
      return "a non-negative integer";
    case Kind::real:
      return "a number";
    case Kind::boolean:
      return "a boolean";
    case Kind::string:
      return "a string";
    case Kind::string_list:
      return "an array of strings";
  }
  return "";
}

void set_field(RunConfig& cfg, const Field& f, const json& value) {
  if (!kind_matches(f.kind, value))
    throw ConfigError(std::string(f.section) + "." + f.key + " must be " + std::string(kind_name(f.kind)));
  if (f.kind == Kind::integer) {
    const auto v = value.get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
      throw ConfigError(std::string(f.section) + "." + f.key + " is out of range");
  }
  f.set(cfg, value);
}

// The architecture section is stored once but applies to both stages.
void sync_architecture(RunConfig& cfg) { cfg.experiment.stage2.head = cfg.experiment.stage1.head; }

void prefixed(const char* section, const std::function<void()>& check) {
  try {
    check();
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    if (msg.rfind("train.", 0) == 0) msg = section + msg.substr(5);
    if (msg.rfind(section, 0) != 0) msg = std::string(section) + ": " + msg;
    throw ConfigError(msg);
  }
}

}  // namespace

void RunConfig::validate() const {
  prefixed("filter", [&] { filter.validate(200.0); });
  prefixed("detection", [&] { detection.validate(); });
  prefixed("augmentation", [&] {
    experiment.augmentation.validate();
    experiment.augment_options.validate();
  });
  prefixed("stage1", [&] { experiment.stage1.validate(); });
  prefixed("stage2", [&] { experiment.stage2.validate(); });
  if (!(experiment.split.val_fraction > 0.0 && experiment.split.val_fraction < 1.0))
    throw ConfigError("split.val_fraction must lie in (0, 1)");
  prefixed("evaluation", [&] { experiment.validate(); });
  prefixed("synth", [&] { synth.validate(); });
}

std::vector<ConfigKey> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> out;
  for (const Field& f : fields())
    out.push_back({std::string(f.section) + "." + f.key, f.get(defaults).dump(), f.provenance});
  return out;
}

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  for (const auto& [section, body] : doc.items()) {
    const bool known = std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return section == f.section; });
    if (!known) throw ConfigError("unknown config section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      const Field* f = find_field(section, key);
      if (!f) throw ConfigError("unknown config key '" + section + "." + key + "'");
      set_field(cfg, *f, value);
    }
  }
  sync_architecture(cfg);
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

void apply_override(RunConfig& cfg, std::string_view assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
    throw ConfigError("override '" + std::string(assignment) + "' must have the form section.key=value");
  const std::string_view section = assignment.substr(0, dot);
  const std::string_view key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string text(assignment.substr(eq + 1));
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown config key '" + std::string(assignment.substr(0, eq)) + "'");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set_field(cfg, *f, value);
  sync_architecture(cfg);
  cfg.validate();
}

std::string run_config_json(const RunConfig& cfg) {
  json doc = json::object();
  for (const Field& f : fields()) doc[f.section][f.key] = f.get(cfg);
  return doc.dump(2) + "\n";
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string config_hash(const RunConfig& cfg) { return hex64(fnv1a64(run_config_json(cfg))); }

namespace {

std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string hash_path(const std::filesystem::path& path) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) return hex64(fnv1a64(file_bytes(path)));
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = fnv1a64("");
  for (const auto& f : files) {
    h = fnv1a64(fs::relative(f, path).generic_string(), h);
    h = fnv1a64(std::string_view("\0", 1), h);
    h = fnv1a64(file_bytes(f), h);
  }
  return hex64(h);
}

std::set<std::string> read_exclusion_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read exclusion list " + path.string());
  std::set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    line = line.substr(0, line.find('#'));
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t\r");
    out.insert(line.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace ecgid
