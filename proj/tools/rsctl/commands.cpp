#include "rsctl/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rsc/adjoint.hpp"
#include "rsc/config.hpp"
#include "rsc/error.hpp"
#include "rsc/fixtures.hpp"
#include "rsc/hjb.hpp"
#include "rsc/jets.hpp"
#include "rsc/montecarlo.hpp"
#include "rsc/parallel.hpp"
#include "rsc/qbsde.hpp"

namespace rsctl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class UsageError : public rsc::Error {
 public:
  using rsc::Error::Error;
};

struct Options {
  std::string subcommand;
  std::optional<std::string> fixture;
  std::optional<std::string> config;
  std::optional<double> mu;
  std::vector<double> x0;
  std::string policy;
  std::size_t steps = 100;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  std::string out;
  std::string format = "json";
  std::size_t threads = 0;
  std::size_t max_paths = 100;

  // bsde / adjoint
  std::string method = "transform";
  unsigned degree = 3;
  double ridge = 1e-8;
  unsigned cells = 0;
  bool dump_paths = false;

  // hjb
  std::size_t nx = 241;
  std::size_t nt = 101;
  std::vector<double> box;
  std::string boundary = "extrapolate";
  bool viscosity = false;
  std::string grid_format = "csv";

  // verify-mp
  std::string adjoints = "numeric";
  double tolerance = 1e-8;

  // verify-jets / reproduce
  std::string theorem = "all";
  std::vector<double> s_samples = {0.25, 0.5, 0.75};
  std::string example;

  // expansion-check
  std::vector<double> mus = {0.4, 0.2, 0.1, 0.05};
};

// The problem a run works on, with the closed-form fixture when there is one.
struct Problem {
  rsc::ProblemModel model;
  std::optional<rsc::ClosedFormExample> fixture;
  bool closed_form_valid = false;
  std::vector<double> x0;
  json source;                // echoed into the output directory
  std::string verbatim_config;  // raw config file text, when --config was used
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw rsc::ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Problem load_problem(const Options& o) {
  if (o.fixture && o.config) throw UsageError("--fixture and --config are mutually exclusive");
  std::optional<double> x0;
  if (o.x0.size() == 1) x0 = o.x0[0];

  if (o.config) {
    const std::string text = read_file(*o.config);
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw rsc::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    rsc::ModelConfig cfg = rsc::parse_model_config(j);
    if (o.mu) cfg.risk = *o.mu;
    if (!o.x0.empty()) cfg.initial_state = o.x0;
    rsc::ProblemModel model = rsc::build_model(cfg);
    Problem p{model, std::nullopt, false, rsc::initial_state(cfg), j, text};
    if (cfg.builtin) {
      std::optional<double> start_x;
      if (p.x0.size() == 1) start_x = p.x0[0];
      rsc::FixtureInstance fi = rsc::make_fixture(*cfg.builtin, cfg.risk, start_x, cfg.horizon.end);
      fi.example.model = model;
      p.fixture = fi.example;
      p.closed_form_valid = fi.closed_form_valid;
    }
    if (p.x0.size() != model.state_dim()) throw rsc::ConfigError("initial state has the wrong dimension");
    return p;
  }

  const std::string id = o.fixture.value_or("5.1");
  rsc::FixtureInstance fi = rsc::make_fixture(id, o.mu, x0);
  if (o.x0.size() > 1) throw UsageError("fixtures are one-dimensional; --x0 takes one value");
  json src = {{"builtin", fi.example.id}, {"risk", fi.example.model.risk()}, {"initial_state", {fi.example.x0}}};
  return Problem{fi.example.model, fi.example, fi.closed_form_valid, {fi.example.x0}, src, ""};
}

rsc::Policy make_policy(const Options& o, const Problem& p, std::string* label) {
  std::string name = o.policy;
  if (name.empty()) name = p.fixture ? "optimal" : "0";
  *label = name;
  if (name == "optimal") {
    if (!p.fixture) throw UsageError("--policy optimal needs a fixture; pass a control index");
    auto ctrl = p.fixture->optimal_control;
    return rsc::Policy::feedback([ctrl](double s, rsc::StateView x) { return ctrl(s, x[0]); },
                                 "fixture optimal feedback");
  }
  std::size_t idx = 0;
  try {
    std::size_t used = 0;
    idx = std::stoul(name, &used);
    if (used != name.size()) throw std::invalid_argument(name);
  } catch (const std::exception&) {
    throw UsageError("--policy must be 'optimal' or a control index, got '" + name + "'");
  }
  if (idx >= p.model.controls().size()) {
    throw UsageError("--policy index " + name + " outside the control set");
  }
  return rsc::Policy::constant(idx);
}

bool uses_optimal_policy(const std::string& label) { return label == "optimal"; }

fs::path output_dir(const Options& o) {
  fs::path dir;
  if (!o.out.empty()) {
    dir = o.out;
  } else {
    const char* root = std::getenv("RSC_OUTPUT_ROOT");
    dir = fs::path(root && *root ? root : "rsc-out") / o.subcommand;
  }
  fs::create_directories(dir);
  return dir;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw rsc::Error("cannot write " + path.string());
  f << j.dump(2) << "\n";
}

json run_echo(const Options& o, const std::vector<std::string>& args) {
  return {{"schema_version", schema_version}, {"subcommand", o.subcommand}, {"arguments", args}};
}

void echo_config(const fs::path& dir, const Problem& p) {
  if (!p.verbatim_config.empty()) {
    std::ofstream f(dir / "model_config.json", std::ios::binary);
    f << p.verbatim_config;
  } else {
    write_json(dir / "model_config.json", p.source);
  }
}

json model_json(const Problem& p) {
  return {{"name", p.model.name()},
          {"state_dim", p.model.state_dim()},
          {"risk", p.model.risk()},
          {"horizon", {p.model.horizon().start, p.model.horizon().end}},
          {"controls", p.model.controls().points()},
          {"fixture", p.fixture ? json(p.fixture->id) : json(nullptr)},
          {"closed_form_valid", p.fixture ? json(p.closed_form_valid) : json(nullptr)}};
}

json base_summary(const Options& o, const Problem& p) {
  return {{"schema_version", schema_version},
          {"subcommand", o.subcommand},
          {"model", model_json(p)},
          {"x0", p.x0}};
}

json cost_json(const rsc::CostEstimate& c) {
  return {{"value", c.value}, {"std_error", c.std_error}, {"n_paths", c.n_paths}, {"mu", c.mu}};
}

rsc::PathBundle simulate(const Options& o, const Problem& p, const rsc::Policy& policy) {
  return rsc::simulate_paths(p.model, policy, p.x0, o.steps, o.paths, o.seed);
}

// ---------------------------------------------------------------- subcommands

int cmd_simulate(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  std::string label;
  const rsc::Policy policy = make_policy(o, p, &label);
  const rsc::PathBundle b = simulate(o, p, policy);
  {
    std::ofstream f(dir / "paths.csv");
    rsc::write_paths_csv(f, p.model, b, o.max_paths);
  }
  const std::size_t n = b.state_dim;
  std::vector<double> mean(n, 0.0), var(n, 0.0);
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    for (std::size_t d = 0; d < n; ++d) mean[d] += b.x(b.n_steps, i, d);
  }
  for (double& m : mean) m /= static_cast<double>(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) {
    for (std::size_t d = 0; d < n; ++d) {
      const double e = b.x(b.n_steps, i, d) - mean[d];
      var[d] += e * e;
    }
  }
  for (double& v : var) v /= static_cast<double>(std::max<std::size_t>(1, b.n_paths - 1));
  s["policy"] = label;
  s["steps"] = b.n_steps;
  s["paths"] = b.n_paths;
  s["seed"] = o.seed;
  s["terminal_mean"] = mean;
  s["terminal_variance"] = var;
  s["paths_csv"] = "paths.csv";
  s["paths_written"] = std::min(o.max_paths, b.n_paths);
  return exit_ok;
}

int cmd_cost(const Options& o, const Problem& p, const fs::path&, json& s) {
  std::string label;
  const rsc::Policy policy = make_policy(o, p, &label);
  const rsc::PathBundle b = simulate(o, p, policy);
  s["policy"] = label;
  s["steps"] = o.steps;
  s["seed"] = o.seed;
  s["cost"] = cost_json(rsc::risk_sensitive_cost(p.model, b));
  if (p.fixture && p.closed_form_valid) {
    s["value_function_at_x0"] = p.fixture->value_fn(p.model.horizon().start, p.x0[0]);
  }
  return exit_ok;
}

rsc::PolynomialBasis basis_from(const Options& o) {
  rsc::PolynomialBasis basis;
  basis.degree = o.degree;
  basis.ridge = o.ridge;
  basis.cells_per_dim = o.cells;
  return basis;
}

rsc::BackwardSolution backward_solve(const Options& o, const Problem& p, const rsc::PathBundle& b) {
  if (o.method == "transform") return rsc::solve_by_transform(p.model, b, basis_from(o));
  if (o.method == "regression") {
    rsc::RegressionOptions ro;
    ro.basis = basis_from(o);
    return rsc::solve_by_regression(p.model, b, ro);
  }
  throw UsageError("--method must be transform or regression");
}

int cmd_bsde(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  std::string label;
  const rsc::Policy policy = make_policy(o, p, &label);
  const rsc::PathBundle b = simulate(o, p, policy);
  const rsc::BackwardSolution sol = backward_solve(o, p, b);
  s["policy"] = label;
  s["method"] = rsc::to_string(sol.method);
  s["basis"] = sol.basis;
  s["steps"] = sol.n_steps;
  s["paths"] = sol.n_paths;
  s["seed"] = o.seed;
  s["Y0"] = sol.y0;
  s["std_error"] = sol.y0_std_error;
  s["max_abs_Y"] = sol.max_abs_y();
  s["sup_norm_proxy"] = rsc::sup_norm_proxy(p.model, b);
  if (o.dump_paths || o.format == "csv") {
    std::ofstream f(dir / "bsde_paths.csv");
    f << "path_id,k,s_k,Y,Z\n";
    f.precision(17);
    for (std::size_t i = 0; i < std::min(o.max_paths, b.n_paths); ++i) {
      for (std::size_t k = 0; k <= b.n_steps; ++k) {
        f << i << ',' << k << ',' << b.time_grid[k] << ',' << sol.y(k, i) << ',';
        if (k < b.n_steps) f << sol.z(k, i);
        f << '\n';
      }
    }
    s["paths_csv"] = "bsde_paths.csv";
  }
  return exit_ok;
}

rsc::GridSpec grid_from(const Options& o, const Problem& p) {
  rsc::GridSpec g;
  g.n_t = o.nt;
  g.n_x.assign(p.model.state_dim(), o.nx);
  if (!o.box.empty()) {
    if (o.box.size() != 2) throw UsageError("--box takes lo,hi");
    g.box = rsc::Box::cube(p.model.state_dim(), o.box[0], o.box[1]);
  }
  return g;
}

json scheme_json(const rsc::SchemeMeta& m) {
  return {{"scheme", "explicit monotone finite differences, upwind drift, centred gradient"},
          {"dt", m.dt},
          {"dx", m.dx},
          {"cfl", m.cfl},
          {"substeps_per_slice", m.substeps},
          {"boundary", m.boundary},
          {"artificial_viscosity", m.artificial_viscosity},
          {"note", m.note}};
}

std::function<double(double, double)> reference_value(const rsc::ClosedFormExample& fx) {
  return fx.value_fn;
}

int cmd_hjb(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  rsc::HjbOptions ho;
  ho.boundary = rsc::parse_boundary_mode(o.boundary);
  ho.artificial_viscosity = o.viscosity;
  const rsc::ValueGrid grid = rsc::solve_hjb(p.model, grid_from(o, p), ho);
  if (o.grid_format == "binary") {
    rsc::write_value_grid_binary(grid, (dir / "value_grid.bin").string());
    s["value_grid"] = "value_grid.bin";
  } else if (o.grid_format == "csv") {
    rsc::write_value_grid_csv(grid, (dir / "value_grid.csv").string());
    s["value_grid"] = "value_grid.csv";
  } else {
    throw UsageError("--grid-format must be csv or binary");
  }
  s["scheme"] = scheme_json(grid.meta);
  json axes = json::array();
  for (const auto& a : grid.axes) axes.push_back({{"lo", a.front()}, {"hi", a.back()}, {"n", a.size()}});
  s["grid"] = {{"n_t", grid.t_nodes.size()}, {"axes", axes}};
  s["value_at_x0"] = grid.interpolate(p.model.horizon().start, rsc::StateView(p.x0));
  if (p.fixture && p.closed_form_valid && grid.dim() == 1) {
    const auto err = rsc::max_interior_error(grid, reference_value(*p.fixture), 0.2);
    s["closed_form"] = {{"max_error", err.max_error},
                        {"at", {err.t, err.x}},
                        {"nodes_compared", err.nodes},
                        {"region", "interior nodes at least 20% of the box width from the boundary"}};
    s["max_error"] = err.max_error;
  }
  return exit_ok;
}

struct AdjointRun {
  rsc::PathBundle bundle;
  rsc::AdjointPath numeric;
  std::string policy;
};

AdjointRun adjoint_run(const Options& o, const Problem& p) {
  AdjointRun r;
  const rsc::Policy policy = make_policy(o, p, &r.policy);
  r.bundle = simulate(o, p, policy);
  const rsc::BackwardSolution sol = backward_solve(o, p, r.bundle);
  rsc::attach(r.bundle, sol);
  r.numeric = rsc::solve_adjoints(p.model, r.bundle, rsc::derivatives_with_fallback(p.model), basis_from(o));
  return r;
}

json path_mean(const rsc::AdjointPath& a, std::size_t k) {
  const std::size_t n = a.dim;
  std::vector<double> p(n, 0.0), q(n, 0.0), P(n * n, 0.0), Q(n * n, 0.0);
  for (std::size_t i = 0; i < a.n_paths; ++i) {
    for (std::size_t d = 0; d < n; ++d) {
      p[d] += a.p_at(k, i)[d];
      q[d] += a.q_at(k, i)[d];
    }
    for (std::size_t d = 0; d < n * n; ++d) {
      P[d] += a.P_at(k, i)[d];
      Q[d] += a.Q_at(k, i)[d];
    }
  }
  const double inv = 1.0 / static_cast<double>(a.n_paths);
  for (double& v : p) v *= inv;
  for (double& v : q) v *= inv;
  for (double& v : P) v *= inv;
  for (double& v : Q) v *= inv;
  return {{"s", a.time_grid[k]}, {"p", p}, {"q", q}, {"P", P}, {"Q", Q}};
}

json comparison_json(const rsc::AdjointComparison& c) {
  return {{"max_p_error", c.max_p_error},   {"max_q_error", c.max_q_error},
          {"max_P_error", c.max_P_error},   {"max_Q_error", c.max_Q_error},
          {"max_P_asymmetry", c.max_P_asymmetry}};
}

void write_adjoint_csv(const fs::path& path, const rsc::AdjointPath& a, std::size_t max_paths) {
  std::ofstream f(path);
  f.precision(17);
  const std::size_t n = a.dim;
  f << "path_id,k,s_k";
  for (std::size_t d = 0; d < n; ++d) f << ",p_" << d + 1;
  for (std::size_t d = 0; d < n; ++d) f << ",q_" << d + 1;
  for (std::size_t r = 0; r < n; ++r) for (std::size_t c = 0; c < n; ++c) f << ",P_" << r + 1 << c + 1;
  for (std::size_t r = 0; r < n; ++r) for (std::size_t c = 0; c < n; ++c) f << ",Q_" << r + 1 << c + 1;
  f << '\n';
  for (std::size_t i = 0; i < std::min(max_paths, a.n_paths); ++i) {
    for (std::size_t k = 0; k <= a.n_steps; ++k) {
      f << i << ',' << k << ',' << a.time_grid[k];
      for (double v : a.p_at(k, i)) f << ',' << v;
      for (double v : a.q_at(k, i)) f << ',' << v;
      for (double v : a.P_at(k, i)) f << ',' << v;
      for (double v : a.Q_at(k, i)) f << ',' << v;
      f << '\n';
    }
  }
}

int cmd_adjoint(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  const AdjointRun r = adjoint_run(o, p);
  s["policy"] = r.policy;
  s["backward_method"] = o.method;
  s["steps"] = o.steps;
  s["paths"] = o.paths;
  s["seed"] = o.seed;
  s["initial"] = path_mean(r.numeric, 0);
  s["terminal"] = path_mean(r.numeric, r.numeric.n_steps);
  if (p.fixture && p.closed_form_valid && uses_optimal_policy(r.policy)) {
    const rsc::AdjointPath cf = rsc::closed_form_adjoints(*p.fixture, r.bundle);
    s["closed_form_comparison"] = comparison_json(rsc::compare_adjoints(r.numeric, cf));
  }
  if (o.format == "csv") {
    write_adjoint_csv(dir / "adjoint.csv", r.numeric, o.max_paths);
    s["adjoint_csv"] = "adjoint.csv";
  }
  return exit_ok;
}

json mp_json(const rsc::MaximumConditionReport& m, const rsc::ProblemModel& model) {
  json table = json::array();
  for (std::size_t c = 0; c < m.worst_table.size(); ++c) {
    table.push_back({{"u", model.controls().points()[c]}, {"script_H", m.worst_table[c]}});
  }
  return {{"cells", m.cells},
          {"passed", m.passed},
          {"pass_fraction", m.pass_fraction},
          {"tolerance", m.tolerance},
          {"worst_violation", m.worst_violation},
          {"worst_cell", {{"step", m.worst_step}, {"path", m.worst_path}, {"s", m.worst_s}, {"x", m.worst_x}}},
          {"script_H_table", table},
          {"min_equality_gap", std::isfinite(m.min_equality_gap) ? json(m.min_equality_gap) : json(nullptr)}};
}

int cmd_verify_mp(const Options& o, const Problem& p, const fs::path&, json& s) {
  const AdjointRun r = adjoint_run(o, p);
  const rsc::AdjointPath* adj = &r.numeric;
  rsc::AdjointPath cf;
  if (o.adjoints == "closed-form") {
    if (!p.fixture || !p.closed_form_valid) throw UsageError("--adjoints closed-form needs a fixture in its closed-form regime");
    cf = rsc::closed_form_adjoints(*p.fixture, r.bundle);
    adj = &cf;
  } else if (o.adjoints != "numeric") {
    throw UsageError("--adjoints must be numeric or closed-form");
  }
  const auto rep = rsc::verify_maximum_condition(p.model, r.bundle, *adj, o.tolerance);
  s["policy"] = r.policy;
  s["adjoints"] = o.adjoints;
  s["steps"] = o.steps;
  s["paths"] = o.paths;
  s["seed"] = o.seed;
  s["maximum_condition"] = mp_json(rep, p.model);
  s["passed"] = rep.pass_fraction == 1.0;
  return rep.pass_fraction == 1.0 ? exit_ok : exit_verification_failed;
}

json verdict_json(const rsc::JetVerdict& v) {
  return {{"kind", rsc::to_string(v.kind)},
          {"candidate", v.candidate},
          {"decision", rsc::to_string(v.decision)},
          {"reason", v.reason},
          {"radii", v.radii},
          {"margin_curve", v.margin_curve},
          {"witness",
           {{"t", v.witness.t}, {"x", v.witness.x}, {"radius", v.witness.radius}, {"violation", v.witness.violation}}}};
}

json theorem_json(const rsc::TheoremReport& r) {
  json checks = json::array();
  for (const auto& c : r.checks) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  json verdicts = json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(verdict_json(v));
  return {{"theorem", r.theorem},
          {"fixture", r.fixture},
          {"passed", r.passed},
          {"checks", checks},
          {"candidates_tested", r.candidates_tested},
          {"members_found", r.members_found},
          {"inconclusive", r.inconclusive},
          {"flags", r.flags},
          {"script_H1", r.h1_values},
          {"verdicts", verdicts}};
}

std::vector<rsc::TheoremReport> run_theorems(const rsc::ClosedFormExample& fx, const std::string& which,
                                             const std::vector<double>& s_samples) {
  rsc::TheoremOptions to;
  to.s_samples = s_samples;
  std::vector<rsc::TheoremReport> out;
  if (which == "4.1" || which == "all") out.push_back(rsc::verify_theorem_41(fx, to));
  if (which == "4.2" || which == "all") out.push_back(rsc::verify_theorem_42(fx, to));
  if (which == "4.3" || which == "all") out.push_back(rsc::verify_theorem_43(fx, to));
  if (out.empty()) throw UsageError("--theorem must be 4.1, 4.2, 4.3 or all");
  return out;
}

void write_margin_csv(const fs::path& path, const std::vector<rsc::TheoremReport>& reports) {
  std::ofstream f(path);
  f.precision(17);
  f << "theorem,verdict,kind,candidate,decision,radius,margin\n";
  for (const auto& r : reports) {
    for (std::size_t v = 0; v < r.verdicts.size(); ++v) {
      const auto& vd = r.verdicts[v];
      std::ostringstream cand;
      cand.precision(17);
      for (std::size_t c = 0; c < vd.candidate.size(); ++c) cand << (c ? " " : "") << vd.candidate[c];
      for (std::size_t k = 0; k < vd.radii.size(); ++k) {
        f << r.theorem << ',' << v << ',' << rsc::to_string(vd.kind) << ',' << cand.str() << ','
          << rsc::to_string(vd.decision) << ',' << vd.radii[k] << ',' << vd.margin_curve[k] << '\n';
      }
    }
  }
}

int cmd_verify_jets(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  if (!p.fixture) throw UsageError("verify-jets needs --fixture");
  if (!p.closed_form_valid) throw UsageError("verify-jets needs the fixture in its closed-form regime");
  const auto reports = run_theorems(*p.fixture, o.theorem, o.s_samples);
  json arr = json::array();
  bool ok = true;
  for (const auto& r : reports) {
    arr.push_back(theorem_json(r));
    ok = ok && r.passed;
  }
  write_margin_csv(dir / "margin_curves.csv", reports);
  s["s_samples"] = o.s_samples;
  s["theorems"] = arr;
  s["margin_curves_csv"] = "margin_curves.csv";
  s["passed"] = ok;
  return ok ? exit_ok : exit_verification_failed;
}

int cmd_expansion(const Options& o, const Problem& p, const fs::path& dir, json& s) {
  std::string label;
  const rsc::Policy policy = make_policy(o, p, &label);
  const auto table = rsc::small_mu_expansion_check(p.model, policy, p.x0, o.mus, o.steps, o.paths, o.seed);
  json rows = json::array();
  for (const auto& r : table.rows) {
    rows.push_back({{"mu", r.mu}, {"J", r.cost}, {"mean_J1", r.mean}, {"var_J1", r.variance},
                    {"prediction", r.prediction}, {"residual", r.residual}});
  }
  s["policy"] = label;
  s["steps"] = o.steps;
  s["paths"] = o.paths;
  s["seed"] = o.seed;
  s["rows"] = rows;
  s["fitted_slope"] = table.slope ? json(*table.slope) : json(nullptr);
  if (o.format == "csv") {
    std::ofstream f(dir / "expansion.csv");
    f.precision(17);
    f << "mu,J,mean_J1,var_J1,prediction,residual\n";
    for (const auto& r : table.rows) {
      f << r.mu << ',' << r.cost << ',' << r.mean << ',' << r.variance << ',' << r.prediction << ','
        << r.residual << '\n';
    }
    s["expansion_csv"] = "expansion.csv";
  }
  return exit_ok;
}

int cmd_reproduce(const Options& o, const fs::path& dir, json& s) {
  const rsc::ClosedFormExample fx = rsc::make_fixture(o.example.empty() ? "5.1" : o.example).example;
  json checks = json::array();
  bool all_ok = true;
  auto check = [&](const std::string& name, bool passed, json detail) {
    checks.push_back({{"name", name}, {"passed", passed}, {"detail", std::move(detail)}});
    all_ok = all_ok && passed;
  };

  // HJB solve against the closed form.
  rsc::GridSpec gs;
  gs.n_t = o.nt;
  gs.n_x = {o.nx};
  gs.box = rsc::Box::cube(1, -3.0, 3.0);
  const rsc::ValueGrid grid = rsc::solve_hjb(fx.model, gs);
  rsc::write_value_grid_csv(grid, (dir / "value_grid.csv").string());
  {
    const bool first = fx.id == "5.1";
    const auto err = first ? rsc::max_interior_error(grid, fx.value_fn, 0.2)
                           : rsc::probe_error(grid, fx.value_fn, rsc::example_5_2_probe_points());
    const double tol = first ? 5e-3 : 2e-2;
    check("hjb_matches_closed_form", err.max_error <= tol,
          {{"max_error", err.max_error}, {"tolerance", tol}, {"at", {err.t, err.x}}, {"points", err.nodes}});
  }

  // Grid policy along the optimal trajectory.
  {
    const auto& axis = grid.axes[0];
    std::size_t mismatches = 0, compared = 0;
    json first_mismatch = nullptr;
    for (std::size_t j = 0; j + 1 < grid.t_nodes.size(); ++j) {
      const double t = grid.t_nodes[j];
      const double x = fx.optimal_state(t);
      const auto it = std::min_element(axis.begin(), axis.end(), [x](double a, double b) {
        return std::fabs(a - x) < std::fabs(b - x);
      });
      const std::size_t i = static_cast<std::size_t>(it - axis.begin());
      const auto got = grid.policy[j * axis.size() + i];
      const auto want = static_cast<std::int32_t>(fx.optimal_control(t, x));
      ++compared;
      if (got != want) {
        if (mismatches++ == 0) first_mismatch = {{"t", t}, {"x", axis[i]}, {"grid_policy", got}, {"closed_form", want}};
      }
    }
    check("hjb_policy_matches_optimal_control", mismatches == 0,
          {{"compared", compared}, {"mismatches", mismatches}, {"first_mismatch", first_mismatch}});
  }

  // Adjoints along the optimal trajectory.
  auto ctrl = fx.optimal_control;
  const rsc::Policy policy =
      rsc::Policy::feedback([ctrl](double t, rsc::StateView x) { return ctrl(t, x[0]); }, "fixture optimal feedback");
  const double x0 = fx.x0;
  rsc::PathBundle bundle = rsc::simulate_paths(fx.model, policy, rsc::StateView(&x0, 1), o.steps, o.paths, o.seed);
  rsc::attach(bundle, rsc::solve_by_transform(fx.model, bundle));
  const rsc::AdjointPath adj = rsc::solve_adjoints(fx.model, bundle, rsc::derivatives_with_fallback(fx.model));
  {
    const auto cmp = rsc::compare_adjoints(adj, rsc::closed_form_adjoints(fx, bundle));
    const double err = std::max(cmp.max_p_error, cmp.max_P_error);
    check("adjoints_match_closed_form", err <= 5e-3, comparison_json(cmp));
  }
  {
    const auto mp = rsc::verify_maximum_condition(fx.model, bundle, adj, 1e-8);
    bool ok = mp.pass_fraction == 1.0;
    json d = mp_json(mp, fx.model);
    if (fx.id == "5.2") {
      // At (0, 1) both controls give the same script-H.
      ok = ok && mp.min_equality_gap <= 1e-10;
      d["equality_case_tolerance"] = 1e-10;
    }
    check("maximum_condition", ok, d);
  }

  // Jet inclusions.
  const auto reports = run_theorems(fx, "all", o.s_samples);
  double max_h1 = 0.0;
  for (const auto& r : reports) {
    for (double h : r.h1_values) max_h1 = std::max(max_h1, std::fabs(h));
  }
  check("script_H1_zero_along_optimum", max_h1 <= 1e-12, {{"max_abs", max_h1}});
  json theorems = json::array();
  for (const auto& r : reports) {
    check("theorem_" + r.theorem, r.passed,
          {{"candidates_tested", r.candidates_tested}, {"members_found", r.members_found},
           {"inconclusive", r.inconclusive}, {"flags", r.flags}});
    theorems.push_back(theorem_json(r));
  }
  write_margin_csv(dir / "margin_curves.csv", reports);

  s["example"] = fx.id;
  s["checks"] = checks;
  s["theorems"] = theorems;
  s["scheme"] = scheme_json(grid.meta);
  s["passed"] = all_ok;
  return all_ok ? exit_ok : exit_verification_failed;
}

void add_model_options(CLI::App* sub, Options& o) {
  sub->add_option("--fixture", o.fixture, "builtin fixture id (5.1, 5.2)");
  sub->add_option("--config", o.config, "model config JSON file");
  sub->add_option("--mu", o.mu, "risk parameter override");
  sub->add_option("--x0", o.x0, "initial state")->delimiter(',');
}

void add_path_options(CLI::App* sub, Options& o) {
  sub->add_option("--policy", o.policy, "'optimal' (fixtures) or a control index");
  sub->add_option("--steps", o.steps, "time steps")->check(CLI::PositiveNumber);
  sub->add_option("--paths", o.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
  sub->add_option("--seed", o.seed, "master seed");
}

void add_output_options(CLI::App* sub, Options& o) {
  sub->add_option("--out", o.out, "output directory (default $RSC_OUTPUT_ROOT/<subcommand>)");
  sub->add_option("--format", o.format, "json, or csv for extra tabular dumps")
      ->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--threads", o.threads, "worker thread cap (0 = all cores)");
}

void add_basis_options(CLI::App* sub, Options& o) {
  sub->add_option("--degree", o.degree, "regression polynomial degree");
  sub->add_option("--ridge", o.ridge, "ridge parameter");
  sub->add_option("--cells", o.cells, "quantile cells per state dimension (0: global polynomial)");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Risk-sensitive control toolkit"};
  app.require_subcommand(1);
  app.fallthrough(false);

  auto* sim = app.add_subcommand("simulate", "simulate controlled paths (paths.csv)");
  add_model_options(sim, o);
  add_path_options(sim, o);
  add_output_options(sim, o);
  sim->add_option("--max-paths", o.max_paths, "paths written to CSV");

  auto* cost = app.add_subcommand("cost", "risk-sensitive cost estimate");
  add_model_options(cost, o);
  add_path_options(cost, o);
  add_output_options(cost, o);

  auto* bsde = app.add_subcommand("bsde", "quadratic BSDE backward solve");
  add_model_options(bsde, o);
  add_path_options(bsde, o);
  add_output_options(bsde, o);
  add_basis_options(bsde, o);
  bsde->add_option("--method", o.method, "transform or regression")->check(CLI::IsMember({"transform", "regression"}));
  bsde->add_flag("--dump-paths", o.dump_paths, "write per-path Y, Z to bsde_paths.csv");
  bsde->add_option("--max-paths", o.max_paths, "paths written to CSV");

  auto* hjb = app.add_subcommand("hjb", "finite-difference HJB solve");
  add_model_options(hjb, o);
  add_output_options(hjb, o);
  hjb->add_option("--nx", o.nx, "nodes per dimension")->check(CLI::Range(3, 100000));
  hjb->add_option("--nt", o.nt, "stored time slices")->check(CLI::Range(2, 100000));
  hjb->add_option("--box", o.box, "lo,hi (default: model domain)")->delimiter(',');
  hjb->add_option("--boundary", o.boundary, "extrapolate or dirichlet");
  hjb->add_flag("--viscosity", o.viscosity, "artificial viscosity for the gradient term");
  hjb->add_option("--grid-format", o.grid_format, "csv or binary")->check(CLI::IsMember({"csv", "binary"}));

  auto* adjoint = app.add_subcommand("adjoint", "first- and second-order adjoint solve");
  auto* mp = app.add_subcommand("verify-mp", "maximum-condition check");
  for (auto* sub : {adjoint, mp}) {
    add_model_options(sub, o);
    add_path_options(sub, o);
    add_output_options(sub, o);
    add_basis_options(sub, o);
    sub->add_option("--method", o.method, "backward solver for Z: transform or regression")
        ->check(CLI::IsMember({"transform", "regression"}));
    sub->add_option("--max-paths", o.max_paths, "paths written to CSV");
  }
  mp->add_option("--adjoints", o.adjoints, "numeric or closed-form")->check(CLI::IsMember({"numeric", "closed-form"}));
  mp->add_option("--tol", o.tolerance, "maximum-condition tolerance");

  auto* jets = app.add_subcommand("verify-jets", "jet inclusion checks along the optimal trajectory");
  add_model_options(jets, o);
  add_output_options(jets, o);
  jets->add_option("--theorem", o.theorem, "4.1, 4.2, 4.3 or all")->check(CLI::IsMember({"4.1", "4.2", "4.3", "all"}));
  jets->add_option("--s", o.s_samples, "trajectory times")->delimiter(',');

  auto* exp = app.add_subcommand("expansion-check", "small-mu expansion of the risk-sensitive cost");
  add_model_options(exp, o);
  add_path_options(exp, o);
  add_output_options(exp, o);
  exp->add_option("--mus", o.mus, "decreasing risk parameters")->delimiter(',');

  auto* rep = app.add_subcommand("reproduce", "full pipeline on a closed-form example");
  add_output_options(rep, o);
  rep->add_option("--example", o.example, "5.1 or 5.2")->required();
  rep->add_option("--nx", o.nx, "HJB nodes")->check(CLI::Range(3, 100000));
  rep->add_option("--nt", o.nt, "HJB stored slices")->check(CLI::Range(2, 100000));
  rep->add_option("--steps", o.steps, "adjoint time steps")->check(CLI::PositiveNumber);
  rep->add_option("--paths", o.paths, "adjoint paths")->check(CLI::PositiveNumber);
  rep->add_option("--seed", o.seed, "master seed");
  rep->add_option("--s", o.s_samples, "trajectory times for the jet checks")->delimiter(',');

  std::vector<std::string> args(argv + 1, argv + argc);
  bool paths_given = false;
  try {
    app.parse(argc, argv);
    const CLI::Option* paths_opt = app.get_subcommands().front()->get_option_no_throw("--paths");
    paths_given = paths_opt != nullptr && paths_opt->count() > 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? exit_ok : exit_usage;
  }
  CLI::App* sub = app.get_subcommands().front();
  o.subcommand = sub->get_name();
  if (!paths_given) {
    if (o.subcommand == "expansion-check") o.paths = 1'000'000;
    if (o.subcommand == "reproduce" || o.subcommand == "adjoint" || o.subcommand == "verify-mp") o.paths = 1000;
  }

  try {
    rsc::set_max_threads(o.threads);
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path dir = output_dir(o);
    write_json(dir / "run.json", run_echo(o, args));
    json s;
    int code = exit_ok;
    if (o.subcommand == "reproduce") {
      s = {{"schema_version", schema_version}, {"subcommand", o.subcommand}};
      write_json(dir / "model_config.json", {{"builtin", o.example}});
      code = cmd_reproduce(o, dir, s);
    } else {
      const Problem p = load_problem(o);
      echo_config(dir, p);
      s = base_summary(o, p);
      if (o.subcommand == "simulate") code = cmd_simulate(o, p, dir, s);
      else if (o.subcommand == "cost") code = cmd_cost(o, p, dir, s);
      else if (o.subcommand == "bsde") code = cmd_bsde(o, p, dir, s);
      else if (o.subcommand == "hjb") code = cmd_hjb(o, p, dir, s);
      else if (o.subcommand == "adjoint") code = cmd_adjoint(o, p, dir, s);
      else if (o.subcommand == "verify-mp") code = cmd_verify_mp(o, p, dir, s);
      else if (o.subcommand == "verify-jets") code = cmd_verify_jets(o, p, dir, s);
      else if (o.subcommand == "expansion-check") code = cmd_expansion(o, p, dir, s);
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s["timing"] = {{"seconds", secs}};
    write_json(dir / "summary.json", s);
    out << s.dump(2) << "\n";
    return code;
  } catch (const UsageError& e) {
    err << "rsctl: " << e.what() << "\n";
    return exit_usage;
  } catch (const rsc::UnknownFixtureError& e) {
    err << "rsctl: " << e.what() << "\n";
    return exit_unknown_fixture;
  } catch (const rsc::ConfigError& e) {
    err << "rsctl: " << e.what() << "\n";
    return exit_bad_config;
  } catch (const rsc::ModelError& e) {
    err << "rsctl: invalid model: " << e.what() << "\n";
    return exit_bad_config;
  } catch (const rsc::SolverError& e) {
    err << "rsctl: solver failure: " << e.what() << "\n";
    return exit_solver_failure;
  } catch (const rsc::NonFiniteError& e) {
    err << "rsctl: solver failure: " << e.what() << "\n";
    return exit_solver_failure;
  } catch (const std::exception& e) {
    err << "rsctl: " << e.what() << "\n";
    return exit_internal;
  }
}

}  // namespace rsctl
