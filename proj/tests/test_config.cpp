#include "ecgid/config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <filesystem>
#include <fstream>

using namespace ecgid;

namespace {

std::string error_of(std::string_view doc) {
  try {
    parse_run_config(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string override_error(std::string_view assignment) {
  RunConfig cfg;
  try {
    apply_override(cfg, assignment);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("defaults") {
  const RunConfig d;
  CHECK_NOTHROW(d.validate());
  const auto round = parse_run_config(run_config_json(d));
  CHECK(run_config_json(round) == run_config_json(d));
  CHECK(config_hash(round) == config_hash(d));
  CHECK(config_hash(d).size() == 16);
  CHECK(parse_run_config("{}").experiment.runs == 10);

  const auto keys = config_keys();
  CHECK(keys.size() > 40);
  const auto j = nlohmann::json::parse(run_config_json(d));
  for (const auto& k : keys) {
    const auto dot = k.name.find('.');
    REQUIRE(dot != std::string::npos);
    CAPTURE(k.name);
    CHECK(j.at(k.name.substr(0, dot)).contains(k.name.substr(dot + 1)));
    CHECK_FALSE(k.provenance.empty());
  }
}

TEST_CASE("partial documents override only their keys") {
  const auto c = parse_run_config(R"({"filter": {"order": 2}, "stage1": {"max_epochs": 7},
                                     "architecture": {"hidden_units": 32},
                                     "evaluation": {"auxiliary_subjects": ["A02", "A01"]}})");
  CHECK(c.filter.order == 2);
  CHECK(c.filter.high_cut_hz == 40.0);
  CHECK(c.experiment.stage1.max_epochs == 7);
  CHECK(c.experiment.stage2.max_epochs == 500);
  CHECK(c.experiment.stage1.head.hidden_units == 32);
  CHECK(c.experiment.stage2.head.hidden_units == 32);
  CHECK(c.experiment.auxiliary_subjects == std::vector<std::string>{"A02", "A01"});
  CHECK(config_hash(c) != config_hash(RunConfig{}));
}

TEST_CASE("rejected documents name the key") {
  CHECK(error_of(R"({"filtr": {}})").find("filtr") != std::string::npos);
  CHECK(error_of(R"({"filter": {"orders": 4}})").find("filter.orders") != std::string::npos);
  CHECK(error_of(R"({"filter": {"order": "four"}})").find("filter.order") != std::string::npos);
  CHECK(error_of(R"({"filter": {"order": 2.5}})").find("filter.order") != std::string::npos);
  CHECK(error_of(R"({"filter": {"zero_phase": 1}})").find("filter.zero_phase") != std::string::npos);
  CHECK(error_of(R"({"filter": 3})").find("filter") != std::string::npos);
  CHECK(error_of("[1, 2]") != "");
  CHECK(error_of("{not json") != "");
  CHECK(error_of(R"({"filter": {"high_cut_hz": 150.0}})").find("filter.high_cut_hz") != std::string::npos);
  CHECK(error_of(R"({"stage1": {"patience": 0}})").find("stage1.patience") != std::string::npos);
  CHECK(error_of(R"({"stage2": {"learning_rate": -1}})").find("stage2.learning_rate") != std::string::npos);
  CHECK(error_of(R"({"architecture": {"dropout": 1.0}})").find("architecture.dropout") != std::string::npos);
  CHECK(error_of(R"({"augmentation": {"t_cap": 90}})").find("augmentation.t_cap") != std::string::npos);
  CHECK(error_of(R"({"synth": {"target_subjects": 1}})").find("synth.target_subjects") != std::string::npos);
  CHECK(error_of(R"({"evaluation": {"runs": -2}})") != "");
}

TEST_CASE("overrides") {
  RunConfig c;
  apply_override(c, "stage2.max_epochs=12");
  apply_override(c, "filter.zero_phase=false");
  apply_override(c, "evaluation.exclusion_list=skip.txt");
  apply_override(c, R"(evaluation.auxiliary_subjects=["A01"])");
  apply_override(c, "augmentation.t_step=3");
  CHECK(c.experiment.stage2.max_epochs == 12);
  CHECK_FALSE(c.filter.zero_phase);
  CHECK(c.exclusion_list == "skip.txt");
  CHECK(c.experiment.auxiliary_subjects == std::vector<std::string>{"A01"});
  CHECK(c.experiment.augment_options.t_step == 3);

  CHECK(override_error("nodot=1") != "");
  CHECK(override_error("filter.order") != "");
  CHECK(override_error("filter.bogus=1").find("filter.bogus") != std::string::npos);
  CHECK(override_error("stage1.patience=0").find("stage1.patience") != std::string::npos);
  CHECK(override_error("filter.order=abc").find("filter.order") != std::string::npos);
}

TEST_CASE("files, hashes and exclusion lists") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");

  const auto dir = std::filesystem::temp_directory_path() / "ecgid_cfg";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir / "d");
  std::ofstream(dir / "run.json") << R"({"evaluation": {"runs": 3}})";
  CHECK(load_run_config(dir / "run.json").experiment.runs == 3);
  CHECK_THROWS(load_run_config(dir / "missing.json"));

  std::ofstream(dir / "d" / "b.txt") << "two";
  std::ofstream(dir / "d" / "a.txt") << "one";
  const auto h1 = hash_path(dir / "d");
  std::ofstream(dir / "d" / "a.txt") << "uno";
  CHECK(hash_path(dir / "d") != h1);
  CHECK(hash_path(dir / "d" / "b.txt") == hex64(fnv1a64("two")));

  std::ofstream(dir / "skip.txt") << "# excluded\nT03\n\n  T07  # noisy\n";
  CHECK(read_exclusion_list(dir / "skip.txt") == std::set<std::string>{"T03", "T07"});
  std::filesystem::remove_all(dir);
}
