#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsctl/commands.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result rsctl_run(std::vector<std::string> args) {
  args.insert(args.begin(), "rsctl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = rsctl::run(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rsctl_cli_test" / name;
  fs::remove_all(dir);
  return dir;
}

json read_json(const fs::path& p) {
  std::ifstream f(p);
  return json::parse(f);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("simulate with the zero policy writes constant paths") {
  const fs::path dir = scratch("simulate");
  const Result r = rsctl_run({"simulate", "--fixture", "5.1", "--policy", "0", "--paths", "10", "--out", dir.string()});
  REQUIRE(r.code == rsctl::exit_ok);
  std::ifstream f(dir / "paths.csv");
  std::string line;
  std::getline(f, line);
  CHECK(line == "path_id,k,s_k,x_1,u,dW");
  std::size_t rows = 0;
  while (std::getline(f, line)) {
    ++rows;
    std::stringstream ss(line);
    std::string cell;
    for (int c = 0; c < 4; ++c) std::getline(ss, cell, ',');
    CHECK(cell == "1");
  }
  CHECK(rows == 10 * 101);
  const json s = read_json(dir / "summary.json");
  CHECK(s.at("schema_version") == rsctl::schema_version);
  CHECK(json::parse(r.out).at("schema_version") == rsctl::schema_version);
  CHECK(fs::exists(dir / "run.json"));
  CHECK(read_json(dir / "model_config.json").at("builtin") == "5.1");
}

TEST_CASE("hjb reports the closed-form error") {
  const fs::path dir = scratch("hjb");
  const Result r = rsctl_run({"hjb", "--fixture", "5.1", "--nx", "241", "--out", dir.string()});
  REQUIRE(r.code == rsctl::exit_ok);
  CHECK(fs::exists(dir / "value_grid.csv"));
  const json s = read_json(dir / "summary.json");
  CHECK(s.at("closed_form").at("max_error").get<double>() <= 5e-3);
  const fs::path bin = scratch("hjb_bin");
  CHECK(rsctl_run({"hjb", "--fixture", "5.1", "--nx", "41", "--nt", "5", "--grid-format", "binary", "--out",
                   bin.string()})
            .code == rsctl::exit_ok);
  CHECK(fs::exists(bin / "value_grid.bin"));
}

TEST_CASE("summaries are reproducible apart from timing") {
  std::vector<json> runs;
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = scratch("repro" + std::to_string(i));
    REQUIRE(rsctl_run({"bsde", "--fixture", "5.2", "--policy", "1", "--paths", "2000", "--steps", "20", "--method",
                       "regression", "--seed", "9", "--out", dir.string()})
                .code == rsctl::exit_ok);
    json s = read_json(dir / "summary.json");
    s.erase("timing");
    runs.push_back(s);
  }
  CHECK(runs[0].dump() == runs[1].dump());
}

TEST_CASE("expression configs are echoed verbatim") {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  const std::string text =
      "{\"state_dim\": 1, \"controls\": [[0], [1]], \"risk\": 1.0,\n"
      " \"drift\": [\"0\"], \"diffusion\": [\"u1\"], \"running_cost\": \"u1^2\",\n"
      " \"terminal_cost\": \"arctan(x1)\", \"initial_state\": [1.0]}\n";
  {
    std::ofstream f(dir / "model.json");
    f << text;
  }
  const Result r = rsctl_run({"cost", "--config", (dir / "model.json").string(), "--policy", "0", "--paths", "20",
                              "--out", (dir / "run").string()});
  REQUIRE(r.code == rsctl::exit_ok);
  CHECK(slurp(dir / "run" / "model_config.json") == text);
  const json s = read_json(dir / "run" / "summary.json");
  CHECK(s.dump().find("0.785398") != std::string::npos);
}

TEST_CASE("default output root from the environment") {
  const fs::path root = scratch("env_root");
  setenv("RSC_OUTPUT_ROOT", root.c_str(), 1);
  const Result r = rsctl_run({"simulate", "--fixture", "5.1", "--policy", "0", "--paths", "2", "--steps", "3"});
  unsetenv("RSC_OUTPUT_ROOT");
  REQUIRE(r.code == rsctl::exit_ok);
  CHECK(fs::exists(root / "simulate" / "summary.json"));
}

TEST_CASE("exit codes") {
  const std::string out = scratch("codes").string();
  CHECK(rsctl_run({}).code == rsctl::exit_usage);
  CHECK(rsctl_run({"frobnicate"}).code == rsctl::exit_usage);
  CHECK(rsctl_run({"--help"}).code == rsctl::exit_ok);
  CHECK(rsctl_run({"simulate", "--fixture", "5.1", "--policy", "7", "--out", out}).code == rsctl::exit_usage);
  CHECK(rsctl_run({"simulate", "--fixture", "9.9", "--out", out}).code == rsctl::exit_unknown_fixture);
  CHECK(rsctl_run({"simulate", "--config", "/nonexistent.json", "--out", out}).code == rsctl::exit_bad_config);
  CHECK(rsctl_run({"simulate", "--fixture", "5.1", "--mu", "-1", "--out", out}).code == rsctl::exit_bad_config);
  const Result solver = rsctl_run({"bsde", "--fixture", "5.2", "--policy", "1", "--paths", "3", "--method",
                                   "regression", "--out", out});
  CHECK(solver.code == rsctl::exit_solver_failure);
  CHECK(solver.err.find("solver failure") != std::string::npos);
}

TEST_CASE("verification subcommands") {
  const fs::path dir = scratch("verify");
  CHECK(rsctl_run({"verify-mp", "--fixture", "5.1", "--paths", "4", "--out", (dir / "mp").string()}).code ==
        rsctl::exit_ok);
  CHECK(rsctl_run({"verify-mp", "--fixture", "5.1", "--policy", "1", "--paths", "200", "--out",
                   (dir / "mp_bad").string()})
            .code == rsctl::exit_verification_failed);
  CHECK(rsctl_run({"verify-jets", "--fixture", "5.2", "--theorem", "4.2", "--out", (dir / "jets").string()}).code ==
        rsctl::exit_ok);
  CHECK(fs::exists(dir / "jets" / "margin_curves.csv"));
}

TEST_CASE("reproduce the first example") {
  const fs::path dir = scratch("reproduce");
  const Result r = rsctl_run({"reproduce", "--example", "5.1", "--out", dir.string()});
  CHECK(r.code == rsctl::exit_ok);
  const json s = read_json(dir / "summary.json");
  CHECK(s.at("passed") == true);
  CHECK(s.at("checks").size() >= 8);
  for (const auto& c : s.at("checks")) CHECK(c.at("passed") == true);
}
