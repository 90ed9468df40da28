#include "ecgid/beat_io.hpp"
#include "ecgid/config.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ecgid;
namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
};

Run cli(const std::string& args) {
  const std::string cmd = std::string(ECGID_CLI) + " " + args + " 2>&1";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p);
  char buf[4096];
  while (std::size_t n = fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int st = pclose(p);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

fs::path scratch(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ecgid_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("cli exit codes and diagnostics") {
  CHECK(cli("").status == 1);
  CHECK(cli("frobnicate").status == 1);
  auto r = cli("--set filter.bogus=1 synth --out /tmp/x");
  CHECK(r.status == 2);
  CHECK(r.out.find("error [config]") != std::string::npos);
  CHECK(r.out.find("filter.bogus") != std::string::npos);
  r = cli("--config /nonexistent/run.json synth --out /tmp/x");
  CHECK(r.status != 0);
  r = cli("preprocess --in /nonexistent/corpus --out /tmp/beats.csv");
  CHECK(r.status == 3);
  CHECK(r.out.find("error [input]") != std::string::npos);
}

TEST_CASE("help lists every configuration key with its provenance") {
  const auto r = cli("--help");
  CHECK(r.status == 0);
  for (const auto& k : config_keys()) {
    CAPTURE(k.name);
    CHECK(r.out.find(k.name) != std::string::npos);
  }
  CHECK(r.out.find("[published]") != std::string::npos);
}

TEST_CASE("synth then preprocess yields valid beats and manifests") {
  const auto d = scratch("pipeline");
  auto r = cli("synth --subjects 2 --aux 0 --seed 7 --out " + (d / "corpus").string() +
               " --set synth.rest_duration_s=12 --set synth.exercise_duration_s=20");
  REQUIRE(r.status == 0);
  CHECK(fs::exists(d / "corpus" / "manifest.json"));
  r = cli("preprocess --in " + (d / "corpus").string() + " --out " + (d / "beats.csv").string() +
          " --set synth.rest_duration_s=12");
  REQUIRE(r.status == 0);
  const auto beats = read_beats(d / "beats.csv");
  REQUIRE(!beats.empty());
  for (const auto& b : beats) CHECK(b.satisfies_invariants());

  std::ifstream mf(d / "beats.csv.manifest.json");
  REQUIRE(mf);
  const auto m = nlohmann::json::parse(mf);
  CHECK(m["subcommand"] == "preprocess");
  CHECK(m["config_hash"].get<std::string>().size() == 16);
  CHECK(m["inputs"].size() == 1);
  CHECK(m["outputs"][0]["fnv1a64"] == hash_path(d / "beats.csv"));
  fs::remove_all(d);
}
