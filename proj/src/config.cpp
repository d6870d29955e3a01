#include "rsc/config.hpp"

#include <fstream>
#include <memory>
#include <set>

#include "rsc/error.hpp"
#include "rsc/expression.hpp"
#include "rsc/fixtures.hpp"

namespace rsc {

using nlohmann::json;

namespace {

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw ConfigError("unknown key '" + item.key() + "' in " + where);
    }
  }
}

DeclaredBounds parse_bounds(const json& j) {
  check_keys(j,
             {"state_lipschitz", "cost_lipschitz", "running_cost_sup", "terminal_cost_sup"},
             "bounds");
  DeclaredBounds b;
  if (j.contains("state_lipschitz")) b.state_lipschitz = get_as<double>(j, "state_lipschitz");
  if (j.contains("cost_lipschitz")) b.cost_lipschitz = get_as<double>(j, "cost_lipschitz");
  if (j.contains("running_cost_sup")) b.running_cost_sup = get_as<double>(j, "running_cost_sup");
  if (j.contains("terminal_cost_sup")) {
    b.terminal_cost_sup = get_as<double>(j, "terminal_cost_sup");
  }
  return b;
}

json bounds_to_json(const DeclaredBounds& b) {
  json j = json::object();
  if (b.state_lipschitz) j["state_lipschitz"] = *b.state_lipschitz;
  if (b.cost_lipschitz) j["cost_lipschitz"] = *b.cost_lipschitz;
  if (b.running_cost_sup) j["running_cost_sup"] = *b.running_cost_sup;
  if (b.terminal_cost_sup) j["terminal_cost_sup"] = *b.terminal_cost_sup;
  return j;
}

Horizon parse_horizon(const json& j) {
  const auto v = j.get<std::vector<double>>();
  if (v.size() != 2) throw ConfigError("horizon must be [t0, T]");
  return Horizon{v[0], v[1]};
}

}  // namespace

ModelConfig parse_model_config(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  ModelConfig c;
  try {
    if (j.contains("builtin")) {
      check_keys(j, {"builtin", "risk", "initial_state", "horizon"}, "builtin config");
      c.builtin = get_as<std::string>(j, "builtin");
      if (j.contains("risk")) c.risk = get_as<double>(j, "risk");
      if (j.contains("initial_state")) {
        c.initial_state = get_as<std::vector<double>>(j, "initial_state");
      }
      if (j.contains("horizon")) c.horizon = parse_horizon(j.at("horizon"));
      return c;
    }
    check_keys(j,
               {"name", "state_dim", "controls", "risk", "horizon", "domain", "drift",
                "diffusion", "running_cost", "terminal_cost", "bounds", "initial_state"},
               "model config");
    if (j.contains("name")) c.name = get_as<std::string>(j, "name");
    c.state_dim = get_as<std::size_t>(j, "state_dim");
    c.controls = get_as<std::vector<std::vector<double>>>(j, "controls");
    c.risk = get_as<double>(j, "risk");
    if (j.contains("horizon")) c.horizon = parse_horizon(j.at("horizon"));
    if (j.contains("domain")) {
      const json& d = j.at("domain");
      check_keys(d, {"lower", "upper"}, "domain");
      c.domain = Box{get_as<std::vector<double>>(d, "lower"),
                     get_as<std::vector<double>>(d, "upper")};
    }
    c.drift = get_as<std::vector<std::string>>(j, "drift");
    c.diffusion = get_as<std::vector<std::string>>(j, "diffusion");
    c.running_cost = get_as<std::string>(j, "running_cost");
    c.terminal_cost = get_as<std::string>(j, "terminal_cost");
    if (j.contains("bounds")) c.bounds = parse_bounds(j.at("bounds"));
    if (j.contains("initial_state")) {
      c.initial_state = get_as<std::vector<double>>(j, "initial_state");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed model config: ") + e.what());
  }
  return c;
}

ModelConfig load_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_model_config(j);
}

json to_json(const ModelConfig& c) {
  json j;
  if (c.builtin) {
    j["builtin"] = *c.builtin;
    if (c.risk) j["risk"] = *c.risk;
    if (!c.initial_state.empty()) j["initial_state"] = c.initial_state;
    j["horizon"] = {c.horizon.start, c.horizon.end};
    return j;
  }
  j["name"] = c.name;
  j["state_dim"] = c.state_dim;
  j["controls"] = c.controls;
  if (c.risk) j["risk"] = *c.risk;
  j["horizon"] = {c.horizon.start, c.horizon.end};
  if (c.domain) j["domain"] = {{"lower", c.domain->lower}, {"upper", c.domain->upper}};
  j["drift"] = c.drift;
  j["diffusion"] = c.diffusion;
  j["running_cost"] = c.running_cost;
  j["terminal_cost"] = c.terminal_cost;
  j["bounds"] = bounds_to_json(c.bounds);
  if (!c.initial_state.empty()) j["initial_state"] = c.initial_state;
  return j;
}

ProblemModel build_model(const ModelConfig& c) {
  if (c.builtin) {
    const std::string& id = *c.builtin;
    ProblemModel m = [&] {
      if (id == "5.1" || id == "example_5_1") {
        return example_5_1(c.risk.value_or(1.0), 1.0, c.horizon.end).model;
      }
      if (id == "5.2" || id == "example_5_2") {
        ProblemModel base = example_5_2(1.0, c.horizon.end).model;
        return c.risk ? base.with_risk(*c.risk) : base;
      }
      return fixture_by_id(id).model;
    }();
    if (c.horizon.start != 0.0) m = m.with_horizon(c.horizon);
    return m;
  }

  if (!c.risk) throw ConfigError("expression model needs 'risk'");
  const std::size_t n = c.state_dim;
  if (n == 0) throw ConfigError("state_dim must be >= 1");
  if (c.controls.empty()) throw ConfigError("controls must be a nonempty list of points");
  if (c.drift.size() != n || c.diffusion.size() != n) {
    throw ConfigError("drift and diffusion need exactly state_dim expressions");
  }
  const std::size_t m = c.controls.front().size();
  const VariableLayout full{n, m, true, true};
  const VariableLayout terminal{n, m, false, false};

  auto parse_all = [&](const std::vector<std::string>& src) {
    auto out = std::make_shared<std::vector<Expression>>();
    for (const auto& s : src) out->push_back(Expression::parse(s, full));
    return out;
  };
  auto drift = parse_all(c.drift);
  auto diffusion = parse_all(c.diffusion);
  auto running = std::make_shared<Expression>(Expression::parse(c.running_cost, full));
  auto term = std::make_shared<Expression>(Expression::parse(c.terminal_cost, terminal));

  bool uses_time = running->depends_on_time();
  for (const auto& e : *drift) uses_time = uses_time || e.depends_on_time();
  for (const auto& e : *diffusion) uses_time = uses_time || e.depends_on_time();

  ModelSpec spec;
  spec.name = c.name;
  spec.state_dim = n;
  spec.risk = *c.risk;
  spec.controls = c.controls;
  spec.horizon = c.horizon;
  spec.domain = c.domain;
  spec.bounds = c.bounds;
  spec.time_homogeneous = !uses_time;
  spec.drift = [drift](double s, StateView x, ControlView u, std::span<double> out) {
    for (std::size_t i = 0; i < drift->size(); ++i) out[i] = (*drift)[i].evaluate(s, x, u);
  };
  spec.diffusion = [diffusion](double s, StateView x, ControlView u, std::span<double> out) {
    for (std::size_t i = 0; i < diffusion->size(); ++i) {
      out[i] = (*diffusion)[i].evaluate(s, x, u);
    }
  };
  spec.running_cost = [running](double s, StateView x, ControlView u) {
    return running->evaluate(s, x, u);
  };
  spec.terminal_cost = [term](StateView x) { return term->evaluate(0.0, x, {}); };
  return ProblemModel(std::move(spec));
}

std::vector<double> initial_state(const ModelConfig& c) {
  if (!c.initial_state.empty()) return c.initial_state;
  if (c.builtin) return {fixture_by_id(*c.builtin).x0};
  if (c.domain) {
    std::vector<double> mid(c.domain->dim());
    for (std::size_t i = 0; i < mid.size(); ++i) {
      mid[i] = 0.5 * (c.domain->lower[i] + c.domain->upper[i]);
    }
    return mid;
  }
  return std::vector<double>(c.state_dim, 0.0);
}

ModelConfig expression_config_for(const std::string& builtin_id) {
  const ClosedFormExample ex = fixture_by_id(builtin_id);
  ModelConfig c;
  c.name = ex.model.name();
  c.state_dim = 1;
  c.controls = ex.model.controls().points();
  c.risk = ex.model.risk();
  c.horizon = ex.model.horizon();
  c.domain = ex.model.domain();
  c.bounds = ex.model.bounds();
  c.initial_state = {ex.x0};
  c.drift = {"0"};
  c.terminal_cost = "arctan(x1)";
  if (ex.id == "5.1") {
    c.diffusion = {"u1"};
    c.running_cost = "u1^2";
  } else {
    c.diffusion = {"x1*u1"};
    c.running_cost = "0";
  }
  return c;
}

}  // namespace rsc
