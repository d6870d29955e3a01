#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "rsc/fixtures.hpp"
#include "rsc/hjb.hpp"
#include "rsc/jets.hpp"

using namespace rsc;

namespace {

using D = JetDecision;

ValueFunction closed_form(const ClosedFormExample& ex) {
  const auto v = ex.value_fn;
  return ValueFunction::callable([v](double t, StateView x) { return v(t, x[0]); }, 1);
}

D x_jet(const ValueFunction& v, double s, double x, double p, double P, JetSide side) {
  return test_x_jet(v, s, StateView(&x, 1), std::span<const double>(&p, 1), std::span<const double>(&P, 1), side)
      .decision;
}

D t_jet(const ValueFunction& v, double s, double x, double q, JetSide side) {
  return test_t_jet(v, s, StateView(&x, 1), q, side).decision;
}

ScriptH1 h1(const ProblemModel& m, double s, double x, double u, double p, double q, double P, double sb) {
  return script_H1(m, s, StateView(&x, 1), ControlView(&u, 1), std::span<const double>(&p, 1),
                   std::span<const double>(&q, 1), std::span<const double>(&P, 1), std::span<const double>(&sb, 1));
}

const JetSide super = JetSide::super;
const JetSide sub = JetSide::sub;

}  // namespace

TEST_CASE("spatial jets of the first example") {
  const ValueFunction v = closed_form(example_5_1());
  CHECK(x_jet(v, 0.5, 1.0, 0.5, -0.5, super) == D::member);
  CHECK(x_jet(v, 0.5, 1.0, 0.5, -0.5, sub) == D::member);
  CHECK(x_jet(v, 0.5, 1.0, 0.5, -0.4, super) == D::member);
  CHECK(x_jet(v, 0.5, 1.0, 0.5, -0.4, sub) == D::non_member);
  CHECK(x_jet(v, 0.5, 1.0, 0.55, -0.5, super) == D::non_member);
}

TEST_CASE("spatial jets at the kink of the second example") {
  const ValueFunction v = closed_form(example_5_2());
  CHECK(x_jet(v, 0.5, 1.0, 0.5, -0.5, super) == D::member);
  for (double P : {-10.0, -0.5, 0.0, 10.0}) CHECK(x_jet(v, 0.5, 1.0, 0.55, P, super) == D::non_member);
  for (double p = 0.0; p <= 1.0; p += 0.125)
    for (double P : {-100.0, -1.0, 0.0, 1.0, 100.0}) CHECK(x_jet(v, 0.5, 1.0, p, P, sub) != D::member);
}

TEST_CASE("time jets") {
  const ValueFunction v1 = closed_form(example_5_1());
  CHECK(t_jet(v1, 0.5, 1.0, 0.0, super) == D::member);
  CHECK(t_jet(v1, 0.5, 1.0, 0.0, sub) == D::member);
  CHECK(t_jet(v1, 0.5, 1.0, 0.1, super) == D::member);
  CHECK(t_jet(v1, 0.5, 1.0, 0.1, sub) == D::non_member);
  const ValueFunction v2 = closed_form(example_5_2());
  CHECK(t_jet(v2, 0.5, 1.0, 0.0, super) == D::member);
  CHECK(t_jet(v2, 0.5, 1.0, 0.0, sub) == D::member);
  const ValueFunction c = ValueFunction::callable([](double, StateView) { return 3.0; }, 1);
  CHECK(t_jet(c, 0.2, 0.0, 0.0, super) == D::member);
  CHECK(t_jet(c, 0.2, 0.0, 0.0, sub) == D::member);
  CHECK(t_jet(c, 0.2, 0.0, 0.1, super) == D::member);
  CHECK(t_jet(c, 0.2, 0.0, 0.1, sub) == D::non_member);
  CHECK(t_jet(c, 0.2, 0.0, -0.1, super) == D::non_member);
  CHECK(t_jet(c, 0.2, 0.0, -0.1, sub) == D::member);
}

TEST_CASE("parabolic jets of a constant") {
  const ValueFunction c = ValueFunction::callable([](double, StateView) { return -1.0; }, 1);
  const double x = 0.3, p = 0.0, P = 0.0;
  for (JetSide side : {super, sub}) {
    const JetVerdict r = test_parabolic_jet(c, 0.5, StateView(&x, 1), 0.0, std::span<const double>(&p, 1),
                                            std::span<const double>(&P, 1), side);
    CHECK(r.decision == D::member);
    CHECK(r.candidate.size() == 3);
  }
}

TEST_CASE("script H1 by hand") {
  const auto m1 = example_5_1().model;
  CHECK(h1(m1, 0.5, 1.0, 0.0, 0.5, 0.0, -0.5, 0.0).value == 0.0);
  const ScriptH1 off = h1(m1, 0.5, 1.0, 1.0, 0.5, 0.0, -0.5, 0.0);
  CHECK(off.value == doctest::Approx(0.875).epsilon(1e-15));
  CHECK(off.first_form == doctest::Approx(0.875).epsilon(1e-15));
  const auto m2 = example_5_2().model;
  CHECK(h1(m2, 0.0, 1.0, 0.0, 0.5, 0.0, -0.5, 0.0).value == 0.0);
  CHECK(std::fabs(h1(m2, 0.0, 1.0, 1.0, 0.5, 0.0, -0.5, 0.0).value) <= 1e-15);
  // Both forms agree away from the optimum too.
  const ScriptH1 any = h1(m2, 0.3, 1.4, 1.0, 0.2, -0.3, 0.7, 0.9);
  CHECK(any.value == doctest::Approx(any.first_form).epsilon(1e-12));
}

TEST_CASE("nesting in P") {
  const auto smooth = ValueFunction::callable([](double t, StateView x) { return std::sin(x[0]) * (1 + t); }, 1);
  struct Case {
    ValueFunction v;
    double s, x, p, P;
  };
  const Case cases[] = {{closed_form(example_5_1()), 0.5, 1.0, 0.5, -0.5},
                        {closed_form(example_5_2()), 0.25, 1.0, 0.5, -0.5},
                        {smooth, 0.5, 0.4, std::cos(0.4) * 1.5, -std::sin(0.4) * 1.5}};
  for (const auto& c : cases) {
    REQUIRE(x_jet(c.v, c.s, c.x, c.p, c.P, super) == D::member);
    for (double dP : {0.0, 0.01, 0.3, 5.0, 1e3}) CHECK(x_jet(c.v, c.s, c.x, c.p, c.P + dP, super) == D::member);
  }
}

TEST_CASE("super and sub membership pins the gradient") {
  const auto smooth = ValueFunction::callable([](double, StateView x) { return std::exp(0.5 * x[0]); }, 1);
  const double x = 0.2, p = 0.5 * std::exp(0.1), P = 0.25 * std::exp(0.1);
  CHECK(x_jet(smooth, 0.0, x, p, P, super) == D::member);
  CHECK(x_jet(smooth, 0.0, x, p, P, sub) == D::member);
  const double h = 1e-5;
  const double grad = (smooth(0.0, x + h) - smooth(0.0, x - h)) / (2 * h);
  CHECK(std::fabs(grad - p) <= 1e-8);
  CHECK(x_jet(smooth, 0.0, x, p + 1e-3, P, super) != D::member);
}

TEST_CASE("adjoint gradient is a first-order supergradient") {
  for (const auto& ex : {example_5_1(), example_5_2()}) {
    const ValueFunction v = closed_form(ex);
    for (double s : {0.25, 0.5, 0.75}) {
      const double p = ex.adjoint_first(s)[0];
      CHECK(x_jet(v, s, ex.optimal_state(s), p, 1e3, super) == D::member);
    }
  }
}

TEST_CASE("verdicts are deterministic") {
  const ValueFunction v = closed_form(example_5_2());
  const double x = 1.0, p = 0.5, P = -0.45;
  const auto a = test_x_jet(v, 0.5, StateView(&x, 1), std::span<const double>(&p, 1), std::span<const double>(&P, 1), super);
  const auto b = test_x_jet(v, 0.5, StateView(&x, 1), std::span<const double>(&p, 1), std::span<const double>(&P, 1), super);
  CHECK(a.decision == b.decision);
  CHECK(a.margin_curve == b.margin_curve);
  CHECK(a.witness.x == b.witness.x);
  CHECK(a.radii == default_schedule().radii);
}

TEST_CASE("grid-backed values are not trusted below four cells") {
  const auto ex = example_5_1();
  const ValueGrid g = tabulate_value_grid(ex.value_fn, Horizon{0, 1}, 11, uniform_axis(-3, 3, 241));
  const ValueFunction v = ValueFunction::from_grid(g);
  CHECK(v.grid_backed());
  CHECK(v.trusted_radius() == doctest::Approx(0.1));
  JetSchedule coarse;
  coarse.radii = {0.8, 0.4, 0.2, 0.1};
  const double x = 1.0, p = 0.5, P = -0.3, p_off = 0.8;
  const auto ok = test_x_jet(v, 0.5, StateView(&x, 1), std::span<const double>(&p_off, 1),
                             std::span<const double>(&P, 1), super, coarse);
  CHECK(ok.decision == D::non_member);
  JetSchedule fine;
  fine.radii = {0.2, 0.1, 0.05};
  const auto r = test_x_jet(v, 0.5, StateView(&x, 1), std::span<const double>(&p, 1),
                            std::span<const double>(&P, 1), super, fine);
  CHECK(r.decision != D::member);
  JetSchedule too_fine;
  too_fine.radii = {0.2, 0.1, 0.01};
  CHECK_THROWS_AS(test_x_jet(v, 0.5, StateView(&x, 1), std::span<const double>(&p, 1),
                             std::span<const double>(&P, 1), super, too_fine),
                  std::invalid_argument);
}

TEST_CASE("schedule validation") {
  const ValueFunction v = closed_form(example_5_1());
  const double x = 1.0;
  JetSchedule bad;
  bad.radii = {0.1, 0.2, 0.05};
  CHECK_THROWS_AS(JetSampler(v, JetSampler::Family::spatial, 0.5, StateView(&x, 1), bad), std::invalid_argument);
  bad.radii = {0.1, 0.05};
  CHECK_THROWS_AS(JetSampler(v, JetSampler::Family::spatial, 0.5, StateView(&x, 1), bad), std::invalid_argument);
  bad.radii = {1e-3, 1e-5, 1e-7};
  CHECK_THROWS_AS(JetSampler(v, JetSampler::Family::spatial, 0.5, StateView(&x, 1), bad), std::invalid_argument);
  const ValueFunction nan = ValueFunction::callable([](double, StateView) { return std::nan(""); }, 1);
  CHECK_THROWS_AS(JetSampler(nan, JetSampler::Family::spatial, 0.5, StateView(&x, 1)), std::invalid_argument);
}

TEST_CASE("two-dimensional spatial jets") {
  const auto v = ValueFunction::callable([](double, StateView x) { return x[0] * x[0] - 2 * x[0] * x[1]; }, 2);
  const std::vector<double> x{0.5, 0.25}, p{0.5, -1.0}, H{2, -2, -2, 0}, H_up{3, -2, -2, 1};
  CHECK(test_x_jet(v, 0.0, x, p, H, super).decision == D::member);
  CHECK(test_x_jet(v, 0.0, x, p, H, sub).decision == D::member);
  CHECK(test_x_jet(v, 0.0, x, p, H_up, super).decision == D::member);
  CHECK(test_x_jet(v, 0.0, x, p, H_up, sub).decision == D::non_member);
}

TEST_CASE("theorem checks pass on both fixtures") {
  for (const auto& ex : {example_5_1(), example_5_2()}) {
    CAPTURE(ex.id);
    const TheoremReport a = verify_theorem_41(ex);
    CHECK(a.passed);
    CHECK(a.candidates_tested >= 13000);
    for (const auto& c : a.checks) {
      CAPTURE(c.name);
      CAPTURE(c.detail);
      CHECK(c.passed);
    }
    const TheoremReport b = verify_theorem_42(ex);
    CHECK(b.passed);
    for (double h : b.h1_values) CHECK(std::fabs(h) <= 1e-12);
    CHECK(verify_theorem_43(ex).passed);
    if (ex.id == "5.2") CHECK(a.members_found == 0);
  }
}

TEST_CASE("names") {
  CHECK(to_string(JetDecision::non_member) == "non_member");
  CHECK(to_string(JetKind::x_super_2) != to_string(JetKind::x_sub_2));
}
