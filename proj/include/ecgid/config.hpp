#pragma once

#include "ecgid/experiment.hpp"
#include "ecgid/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace ecgid {

// Every tunable of the pipeline in one document. JSON layout:
//   filter, detection, augmentation, architecture, stage1, stage2, split,
//   evaluation, synth
// with one object per section; see config_keys() for the leaves.
struct RunConfig {
  FilterSpec filter;
  DetectionConfig detection;
  ExperimentConfig experiment;
  CorpusPlan synth;
  std::string exclusion_list;  // file of subject ids, one per line; empty for none

  // ConfigError naming the offending key.
  void validate() const;
};

struct ConfigKey {
  std::string name;  // "section.key"
  std::string default_value;
  std::string provenance;
};

// All leaves with their default values, in document order.
std::vector<ConfigKey> config_keys();

// Unknown sections or keys, wrong value types and invariant violations all
// raise ConfigError.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);

// Applies "section.key=value" overrides; value is JSON, or a bare string.
void apply_override(RunConfig& cfg, std::string_view assignment);

// Canonical JSON (fixed key order, two-space indent).
std::string run_config_json(const RunConfig& cfg);
// FNV-1a over the canonical JSON, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);
// Hash of a file's bytes, or of a directory's sorted file names and contents.
std::string hash_path(const std::filesystem::path& path);

// Blank lines and text after '#' are ignored.
std::set<std::string> read_exclusion_list(const std::filesystem::path& path);

}  // namespace ecgid
