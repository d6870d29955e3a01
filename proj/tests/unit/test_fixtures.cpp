#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "rsc/error.hpp"
#include "rsc/fixtures.hpp"

using namespace rsc;

TEST_CASE("example 5.1 closed forms") {
  const auto ex = example_5_1();
  CHECK(ex.value_fn(0.3, 1.0) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
  CHECK(ex.optimal_control(0.3, 2.0) == 0);
  CHECK(ex.optimal_state(0.7) == 1.0);
  CHECK(ex.adjoint_second(0.5)[0] == -0.5);
  CHECK(ex.adjoint_second(0.5)[1] == 0.0);
  const auto at0 = example_5_1(1.0, 0.0);
  CHECK(at0.adjoint_first(0.2)[0] == 1.0);
  CHECK(at0.adjoint_first(0.2)[1] == 0.0);
  CHECK_THROWS_AS(example_5_1(0.5), ModelError);
}

TEST_CASE("example 5.2 closed forms") {
  const auto ex = example_5_2();
  CHECK(ex.model.risk() == 2.0);
  CHECK(ex.value_fn(1.0, 2.0) == doctest::Approx(std::atan(2.0)).epsilon(1e-15));
  CHECK(ex.value_fn(0.0, 0.5) == std::atan(0.5));
  CHECK(ex.adjoint_first(0.0)[0] == 0.5);
  CHECK(ex.adjoint_second(0.0)[0] == -0.5);
  CHECK(ex.optimal_control(0.0, 1.0) == 0);
  CHECK(ex.optimal_control(0.0, 1.5) == 1);
  CHECK_THROWS_AS(example_5_2(1.5), ModelError);
}

TEST_CASE("terminal slices equal h") {
  oracle::Gen g(2);
  for (const auto& ex : {example_5_1(), example_5_2()}) {
    for (int i = 0; i < 200; ++i) {
      const double x = g.uniform(-5, 5);
      const std::vector<double> xv{x};
      CHECK(std::fabs(ex.value_fn(1.0, x) - ex.model.terminal_cost(xv)) <= 1e-12);
    }
  }
}

TEST_CASE("example 5.2 value is continuous across x = 1") {
  for (double t : {0.0, 0.1, 0.5, 0.9, 1.0}) {
    CAPTURE(t);
    CHECK(std::fabs(example_5_2_value(t, 1.0 - 1e-6, 1.0) - example_5_2_value(t, 1.0 + 1e-6, 1.0)) <= 1e-5);
    CHECK(example_5_2_value(t, 1.0, 1.0) == doctest::Approx(std::numbers::pi / 4).epsilon(1e-15));
  }
  // The limits themselves agree: shrink the gap.
  const double left = example_5_2_value(0.3, 1.0 - 1e-12, 1.0);
  const double right = example_5_2_value(0.3, 1.0 + 1e-12, 1.0);
  CHECK(std::fabs(left - right) <= 1e-9);
}

TEST_CASE("jet descriptors contain the adjoint values") {
  for (const auto& ex : {example_5_1(), example_5_2()}) {
    for (double s : {0.25, 0.5, 0.75}) {
      const double p = ex.adjoint_first(s)[0];
      const double P = ex.adjoint_second(s)[0];
      CHECK(ex.jet_sets.p_super(s).contains(p, 1e-12));
      CHECK(ex.jet_sets.P_super(s).contains(P, 1e-12));
      CHECK(ex.jet_sets.t_super(s).contains(0.0));
      CHECK(ex.jet_sets.t_sub(s).contains(0.0));
    }
  }
  const auto ex = example_5_2();
  CHECK(ex.jet_sets.p_sub(0.5).empty);
  const Interval p = ex.jet_sets.p_super(0.5);
  CHECK(p.hi == 0.5);
  CHECK(p.lo == doctest::Approx(0.5 + std::numbers::pi / 4 * (1 - std::exp(0.5 / std::numbers::pi))));
}

TEST_CASE("fixture registry") {
  CHECK(fixture_by_id("5.1").id == "5.1");
  CHECK(fixture_by_id("example_5_2").id == "5.2");
  CHECK_THROWS_AS(fixture_by_id("5.3"), UnknownFixtureError);
  CHECK(fixture_ids().size() == 2);
  CHECK(make_fixture("5.1", 2.0).closed_form_valid);
  CHECK_FALSE(make_fixture("5.1", 0.5).closed_form_valid);
  CHECK(make_fixture("5.1", 0.5).example.model.risk() == 0.5);
  CHECK(make_fixture("5.2", 2.0).closed_form_valid);
  CHECK_FALSE(make_fixture("5.2", 1.0).closed_form_valid);
  CHECK(make_fixture("5.1", std::nullopt, 0.0).example.x0 == 0.0);
  CHECK(example_5_2_probe_points().size() == 20);
}
