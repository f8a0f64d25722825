#include <doctest.h>

#include <stdexcept>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "mvsim_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string& args, const fs::path& err_file, const std::string& env = "") {
  const std::string cmd = env + " " + MVSIM_CLI_PATH + " " + args + " 2> " + err_file.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> contents(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) out[entry.path().filename().string()] = slurp(entry.path());
  return out;
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const auto path = dir / "config.json";
  std::ofstream(path) << doc.dump(2);
  return path;
}

const char* kSmallStudy = R"({
  "seed": 4,
  "model": {"preset": "double_well.case2"},
  "scheme": {"N": 12, "dt_grid": [0.0625, 0.03125, 0.015625]},
  "experiment": {
    "converge": {"ref_dt": 0.00390625, "seeds": [1, 2],
                 "schemes": [{"taming": "TanhM"}, {"taming": "MixM", "include_measure_term": true},
                             {"kind": "tamed_euler"}]},
    "simulate": {},
    "moments": {"p": 4, "ratio_limit": null},
    "probe": {},
    "validate": {"samples": 500, "derivative_trials": 10}
  },
  "io": {"snapshot_times": [0, 0.5, 1]}
})";

}  // namespace

TEST_CASE("every subcommand is byte-identical across thread counts") {
  const auto dir = scratch("threads");
  const auto cfg = write_config(dir, json::parse(kSmallStudy));
  for (const char* sub : {"simulate", "converge", "validate", "moments", "probe"}) {
    CAPTURE(sub);
    const auto a = dir / (std::string(sub) + "_1");
    const auto b = dir / (std::string(sub) + "_4");
    REQUIRE(run(std::string(sub) + " --config " + cfg.string() + " --threads 1 --out " + a.string(),
                dir / "err") == 0);
    REQUIRE(run(std::string(sub) + " --config " + cfg.string() + " --threads 4 --out " + b.string(),
                dir / "err") == 0);
    auto ca = contents(a);
    auto cb = contents(b);
    REQUIRE(ca.size() == cb.size());
    REQUIRE(ca.size() >= 2);
    for (auto& [name, text] : ca) {
      CAPTURE(name);
      std::string other = cb.at(name);
      // The echoes differ only in the output directory they name.
      if (name.find("json") != std::string::npos) {
        auto replace = [](std::string s, const std::string& from, const std::string& to) {
          for (std::size_t pos; (pos = s.find(from)) != std::string::npos;) s.replace(pos, from.size(), to);
          return s;
        };
        other = replace(other, b.string(), a.string());
      }
      CHECK(text == other);
    }
  }
}

TEST_CASE("rerunning from the resolved echo reproduces every output") {
  const auto dir = scratch("echo");
  const auto cfg = write_config(dir, json::parse(kSmallStudy));
  const auto out = dir / "run";
  REQUIRE(run("simulate --config " + cfg.string() + " --seed 99 --out " + out.string(), dir / "err") == 0);
  const auto first = contents(out);
  const auto echo = dir / "echo.json";
  fs::copy_file(out / "resolved_config.json", echo);
  fs::remove_all(out);
  REQUIRE(run("simulate --config " + echo.string(), dir / "err") == 0);
  CHECK(contents(out) == first);
  CHECK(json::parse(first.at("resolved_config.json"))["seed"] == 99);
  CHECK(first.at("snapshots.csv").rfind("time,particle,coord_0,blown_up\n", 0) == 0);
  const auto meta = json::parse(first.at("snapshots.meta.json"));
  CHECK(meta["schema_version"] == 1);
  CHECK(meta["seed"] == 99);
  CHECK(meta.contains("library_version"));
  CHECK(meta["config"] == json::parse(first.at("resolved_config.json")));
}

TEST_CASE("an interrupted study resumes to the same file") {
  const auto dir = scratch("resume");
  const auto cfg = write_config(dir, json::parse(kSmallStudy));
  const auto out = dir / "study";
  REQUIRE(run("converge --config " + cfg.string() + " --out " + out.string(), dir / "err") == 0);
  const auto full = contents(out);
  auto csv = full.at("convergence.csv");
  std::istringstream lines(csv);
  std::string line, truncated;
  for (int i = 0; i < 7 && std::getline(lines, line); ++i) truncated += line + "\n";
  std::ofstream(out / "convergence.csv", std::ios::binary | std::ios::trunc) << truncated;
  REQUIRE(run("converge --config " + cfg.string() + " --out " + out.string(), dir / "err") == 0);
  CHECK(contents(out) == full);
  const auto summary = json::parse(full.at("fit_summary.json"));
  CHECK(summary["fits"].size() == 3);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3 * 2);
}

TEST_CASE("exit status and error reports") {
  const auto dir = scratch("errors");
  SUBCASE("unknown taming kind") {
    auto doc = json::parse(kSmallStudy);
    doc["scheme"]["taming"] = "cosh";
    const auto cfg = write_config(dir, doc);
    CHECK(run("simulate --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "err") == 2);
    const auto err = json::parse(slurp(dir / "err"));
    CHECK(err["error"]["type"] == "config");
    CHECK(err["error"]["message"].get<std::string>().rfind("scheme.taming", 0) == 0);
  }
  SUBCASE("subcommand without its experiment block") {
    auto doc = json::parse(kSmallStudy);
    doc["experiment"].erase("probe");
    const auto cfg = write_config(dir, doc);
    CHECK(run("probe --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "err") == 2);
    CHECK(json::parse(slurp(dir / "err"))["error"]["message"].get<std::string>().find("probe") !=
          std::string::npos);
  }
  SUBCASE("failed acceptance check") {
    auto doc = json::parse(kSmallStudy);
    doc["experiment"]["converge"]["slope_window"] = {5.0, 6.0};
    const auto cfg = write_config(dir, doc);
    CHECK(run("converge --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "err") == 1);
    CHECK(json::parse(slurp(dir / "err"))["error"]["type"] == "check_failed");
    CHECK(json::parse(slurp(dir / "o" / "fit_summary.json"))["passed"] == false);
  }
  SUBCASE("probe expectation") {
    auto doc = json::parse(kSmallStudy);
    doc["model"]["preset"] = "double_well.case1";
    doc["scheme"]["kind"] = "classical_milstein";
    doc["scheme"]["dt"] = 0.015625;
    doc["scheme"]["N"] = 200;
    doc["experiment"].erase("converge");
    doc["experiment"]["probe"] = {{"min_blown_up_fraction", 0.5}};
    const auto cfg = write_config(dir, doc);
    CHECK(run("probe --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "err") == 0);
    doc["experiment"]["probe"] = {{"max_blown_up_fraction", 0.0}};
    write_config(dir, doc);
    CHECK(run("probe --config " + cfg.string() + " --out " + (dir / "o").string(), dir / "err") == 1);
  }
  SUBCASE("missing config file") {
    CHECK(run("simulate --config " + (dir / "nope.json").string(), dir / "err") != 0);
  }
}

TEST_CASE("output directory precedence") {
  const auto dir = scratch("precedence");
  auto doc = json::parse(kSmallStudy);
  doc["io"]["output_dir"] = (dir / "from_config").string();
  const auto cfg = write_config(dir, doc);
  REQUIRE(run("simulate --config " + cfg.string(), dir / "err") == 0);
  CHECK(fs::exists(dir / "from_config" / "snapshots.csv"));
  const std::string env = "MVSIM_OUTPUT_DIR=" + (dir / "from_env").string();
  REQUIRE(run("simulate --config " + cfg.string(), dir / "err", env) == 0);
  CHECK(fs::exists(dir / "from_env" / "snapshots.csv"));
  REQUIRE(run("simulate --config " + cfg.string() + " --out " + (dir / "from_flag").string(), dir / "err", env) == 0);
  CHECK(fs::exists(dir / "from_flag" / "snapshots.csv"));
}
