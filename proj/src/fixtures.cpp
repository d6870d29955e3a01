#include "rsc/fixtures.hpp"

#include <cmath>
#include <numbers>

#include "rsc/error.hpp"

namespace rsc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double arctan_dx(double x) { return 1.0 / (1.0 + x * x); }

double arctan_dxx(double x) {
  const double d = 1.0 + x * x;
  return -2.0 * x / (d * d);
}

void zero(std::span<double> out) {
  for (double& v : out) v = 0.0;
}

ModelSpec arctan_base(const std::string& name, double mu, double horizon) {
  ModelSpec spec;
  spec.name = name;
  spec.state_dim = 1;
  spec.risk = mu;
  spec.controls = {{0.0}, {1.0}};
  spec.horizon = Horizon{0.0, horizon};
  spec.time_homogeneous = true;
  spec.drift = [](double, StateView, ControlView, std::span<double> out) { out[0] = 0.0; };
  spec.terminal_cost = [](StateView x) { return std::atan(x[0]); };

  ModelDerivatives& d = spec.derivatives;
  d.drift_jacobian = [](double, StateView, ControlView, std::span<double> out) { zero(out); };
  d.terminal_cost_gradient = [](StateView x, std::span<double> out) { out[0] = arctan_dx(x[0]); };
  d.terminal_cost_hessian = [](StateView x, std::span<double> out) {
    out[0] = arctan_dxx(x[0]);
  };
  d.drift_hessian_contraction = [](double, StateView, ControlView, StateView,
                                   std::span<double> out) { zero(out); };
  d.diffusion_hessian_contraction = [](double, StateView, ControlView, StateView,
                                       std::span<double> out) { zero(out); };
  d.running_cost_gradient = [](double, StateView, ControlView, std::span<double> out) {
    zero(out);
  };
  d.running_cost_hessian = [](double, StateView, ControlView, std::span<double> out) {
    zero(out);
  };

  spec.bounds.state_lipschitz = 1.0;
  spec.bounds.cost_lipschitz = 1.0;
  spec.bounds.terminal_cost_sup = std::numbers::pi / 2.0;
  return spec;
}

// Smooth point of arctan with constant trajectory: the jets of a C^2 function.
JetSetDescriptor smooth_jets(double x) {
  const double p = arctan_dx(x);
  const double P = arctan_dxx(x);
  JetSetDescriptor j;
  j.p_super = [p](double) { return Interval::point(p); };
  j.P_super = [P](double) { return Interval{P, kInf, false}; };
  j.p_sub = [p](double) { return Interval::point(p); };
  j.P_sub = [P](double) { return Interval{-kInf, P, false}; };
  j.t_super = [](double) { return Interval{0.0, kInf, false}; };
  j.t_sub = [](double) { return Interval{-kInf, 0.0, false}; };
  return j;
}

}  // namespace

ClosedFormExample example_5_1(double mu, double x0, double horizon) {
  if (!(mu >= 1.0)) {
    throw ModelError("example 5.1 requires mu >= 1, got " + std::to_string(mu));
  }
  ModelSpec spec = arctan_base("example_5_1", mu, horizon);
  spec.diffusion = [](double, StateView, ControlView u, std::span<double> out) { out[0] = u[0]; };
  spec.running_cost = [](double, StateView, ControlView u) { return u[0] * u[0]; };
  spec.derivatives.diffusion_jacobian = [](double, StateView, ControlView,
                                           std::span<double> out) { out[0] = 0.0; };
  spec.bounds.running_cost_sup = 1.0;

  ClosedFormExample ex{"5.1", ProblemModel(std::move(spec)), x0, {}, {}, {}, {}, {}, {}};
  ex.value_fn = [](double, double x) { return std::atan(x); };
  ex.optimal_control = [](double, double) -> std::size_t { return 0; };
  ex.optimal_state = [x0](double) { return x0; };
  ex.adjoint_first = [x0](double) { return std::array<double, 2>{arctan_dx(x0), 0.0}; };
  ex.adjoint_second = [x0](double) { return std::array<double, 2>{arctan_dxx(x0), 0.0}; };
  ex.jet_sets = smooth_jets(x0);
  return ex;
}

double example_5_2_value(double t, double x, double horizon) {
  if (x <= 1.0) return std::atan(x);
  const double at = std::atan(x);
  const double d = 1.0 + x * x;
  const double m = x * x * x / (d * d * at);
  const double e = std::exp(m * (t - horizon));
  return x * e / (x - 1.0 + e) * at;
}

ClosedFormExample example_5_2(double x0, double horizon) {
  if (!(x0 <= 1.0)) {
    throw ModelError("example 5.2 fixture needs x0 <= 1 (constant optimal trajectory)");
  }
  ModelSpec spec = arctan_base("example_5_2", 2.0, horizon);
  spec.diffusion = [](double, StateView x, ControlView u, std::span<double> out) {
    out[0] = x[0] * u[0];
  };
  spec.running_cost = [](double, StateView, ControlView) { return 0.0; };
  spec.derivatives.diffusion_jacobian = [](double, StateView, ControlView u,
                                           std::span<double> out) { out[0] = u[0]; };
  spec.bounds.running_cost_sup = 0.0;

  ClosedFormExample ex{"5.2", ProblemModel(std::move(spec)), x0, {}, {}, {}, {}, {}, {}};
  ex.value_fn = [horizon](double s, double x) { return example_5_2_value(s, x, horizon); };
  ex.optimal_control = [](double, double x) -> std::size_t { return x <= 1.0 ? 0 : 1; };
  ex.optimal_state = [x0](double) { return x0; };
  ex.adjoint_first = [x0](double) { return std::array<double, 2>{arctan_dx(x0), 0.0}; };
  ex.adjoint_second = [x0](double) { return std::array<double, 2>{arctan_dxx(x0), 0.0}; };
  if (x0 < 1.0) {
    ex.jet_sets = smooth_jets(x0);
  } else {
    // Kink at x = 1: left slope 1/2, right slope below it; concave corner.
    JetSetDescriptor& j = ex.jet_sets;
    j.p_super = [horizon](double s) {
      const double lo = 0.5 + std::numbers::pi / 4.0 *
                                  (1.0 - std::exp((horizon - s) / std::numbers::pi));
      return Interval{lo, 0.5, false};
    };
    j.P_super = [](double) { return Interval{-0.5, kInf, false}; };
    j.p_sub = [](double) { return Interval::none(); };
    j.P_sub = [](double) { return Interval::none(); };
    j.t_super = [](double) { return Interval{0.0, kInf, false}; };
    j.t_sub = [](double) { return Interval{-kInf, 0.0, false}; };
  }
  return ex;
}

std::vector<std::string> fixture_ids() { return {"5.1", "5.2"}; }

ClosedFormExample fixture_by_id(const std::string& id) {
  if (id == "5.1" || id == "example_5_1") return example_5_1();
  if (id == "5.2" || id == "example_5_2") return example_5_2();
  throw UnknownFixtureError("unknown fixture '" + id + "' (known: 5.1, 5.2)");
}

FixtureInstance make_fixture(const std::string& id, std::optional<double> mu,
                             std::optional<double> x0, std::optional<double> horizon) {
  const std::string canonical = fixture_by_id(id).id;
  const double T = horizon.value_or(1.0);
  FixtureInstance fi{canonical == "5.1" ? example_5_1(1.0, x0.value_or(1.0), T)
                                        : example_5_2(x0.value_or(1.0), T),
                     true};
  if (mu) {
    if (canonical == "5.1" && *mu >= 1.0) {
      fi.example = example_5_1(*mu, x0.value_or(1.0), T);
    } else if (!(canonical == "5.2" && *mu == 2.0)) {
      fi.example.model = fi.example.model.with_risk(*mu);
      fi.closed_form_valid = false;
    }
  }
  return fi;
}

std::vector<std::array<double, 2>> example_5_2_probe_points() {
  std::vector<std::array<double, 2>> pts;
  for (double t : {0.0, 0.5}) {
    for (double x : {-1.5, -1.0, -0.5, 0.0, 0.5, 0.9, 1.0, 1.2, 1.5, 1.8}) pts.push_back({t, x});
  }
  return pts;
}

}  // namespace rsc
