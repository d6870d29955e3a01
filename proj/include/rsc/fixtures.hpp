#pragma once

// The two closed-form examples (n = 1, U = {0, 1}, h = arctan) with their
// known value functions, optimal controls, adjoint pairs and jet sets.

#include <array>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rsc/model.hpp"

namespace rsc {

// Closed interval [lo, hi]; infinite endpoints allowed.
struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  bool empty = false;

  bool contains(double v, double tol = 0.0) const {
    return !empty && v >= lo - tol && v <= hi + tol;
  }
  static Interval point(double v) { return Interval{v, v, false}; }
  static Interval none() { return Interval{0.0, 0.0, true}; }
};

// Jet sets of V along the optimal trajectory, as functions of s.
struct JetSetDescriptor {
  std::function<Interval(double s)> p_super;  // D_x^{2,+}: p-component
  std::function<Interval(double s)> P_super;  // D_x^{2,+}: P-component
  std::function<Interval(double s)> p_sub;
  std::function<Interval(double s)> P_sub;
  std::function<Interval(double s)> t_super;  // D_{t+}^{1,+}
  std::function<Interval(double s)> t_sub;
};

struct ClosedFormExample {
  std::string id;  // "5.1" or "5.2"
  ProblemModel model;
  double x0 = 1.0;
  std::function<double(double s, double x)> value_fn;
  std::function<std::size_t(double s, double x)> optimal_control;  // index into U
  std::function<double(double s)> optimal_state;
  std::function<std::array<double, 2>(double s)> adjoint_first;   // (p, q)
  std::function<std::array<double, 2>(double s)> adjoint_second;  // (P, Q)
  JetSetDescriptor jet_sets;
};

// dX = u dW, f = u^2, h = arctan. Throws ModelError for mu < 1.
ClosedFormExample example_5_1(double mu = 1.0, double x0 = 1.0, double horizon = 1.0);

// dX = x u dW, f = 0, h = arctan, mu = 2. The optimal trajectory is constant
// only for x0 <= 1; larger x0 throws ModelError.
ClosedFormExample example_5_2(double x0 = 1.0, double horizon = 1.0);

// The piecewise value function of the second example.
double example_5_2_value(double t, double x, double horizon);

// "5.1", "example_5_1", "5.2", "example_5_2". Throws UnknownFixtureError.
ClosedFormExample fixture_by_id(const std::string& id);

// Builds a fixture with an optional risk parameter and initial state.
// closed_form_valid is false when the risk parameter leaves the regime
// where the closed forms hold (5.1: mu >= 1, 5.2: mu = 2).
struct FixtureInstance {
  ClosedFormExample example;
  bool closed_form_valid = true;
};
FixtureInstance make_fixture(const std::string& id, std::optional<double> mu = std::nullopt,
                             std::optional<double> x0 = std::nullopt,
                             std::optional<double> horizon = std::nullopt);

// Twenty interior (t, x) points on [-3, 3], T = 1, covering both branches of
// the second example's value function.
std::vector<std::array<double, 2>> example_5_2_probe_points();
std::vector<std::string> fixture_ids();

}  // namespace rsc
