#pragma once

// Declarative model configs (JSON). Two forms:
//
//   {"builtin": "5.1", "risk": 1.5, "initial_state": [1.0]}
//
//   {"name": "gbm", "state_dim": 1, "controls": [[0], [1]], "risk": 2,
//    "horizon": [0, 1], "domain": {"lower": [-6], "upper": [6]},
//    "drift": ["0"], "diffusion": ["x1*u1"], "running_cost": "0",
//    "terminal_cost": "arctan(x1)", "initial_state": [1.0],
//    "bounds": {"state_lipschitz": 1, "terminal_cost_sup": 1.5708}}
//
// See docs/formats.md.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rsc/model.hpp"

namespace rsc {

struct ModelConfig {
  std::optional<std::string> builtin;
  std::string name = "custom";
  std::size_t state_dim = 1;
  std::vector<std::vector<double>> controls;
  std::optional<double> risk;  // required for expression models
  Horizon horizon;
  std::optional<Box> domain;
  std::vector<std::string> drift;
  std::vector<std::string> diffusion;
  std::string running_cost;
  std::string terminal_cost;
  DeclaredBounds bounds;
  std::vector<double> initial_state;
};

// Throws ConfigError on unknown keys, wrong types or missing fields.
ModelConfig parse_model_config(const nlohmann::json& j);
ModelConfig load_model_config(const std::filesystem::path& path);
nlohmann::json to_json(const ModelConfig& config);

// Builtins resolve through the fixture registry (UnknownFixtureError);
// expressions are parsed here (ConfigError).
ProblemModel build_model(const ModelConfig& config);

// Initial state from the config, else the fixture's x0, else the domain centre.
std::vector<double> initial_state(const ModelConfig& config);

// Expression-form config equivalent to a builtin fixture.
ModelConfig expression_config_for(const std::string& builtin_id);

}  // namespace rsc
