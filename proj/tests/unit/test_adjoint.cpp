#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "rsc/adjoint.hpp"
#include "rsc/error.hpp"
#include "rsc/fixtures.hpp"
#include "rsc/qbsde.hpp"

using namespace rsc;

namespace {

PathBundle optimal_bundle(const ClosedFormExample& ex, std::size_t steps, std::size_t paths,
                          std::size_t control = 0) {
  const std::vector<double> x0{ex.x0};
  PathBundle b = simulate_paths(ex.model, Policy::constant(control), x0, steps, paths, 5);
  attach(b, solve_by_transform(ex.model, b));
  return b;
}

double H1(const ProblemModel& m, double x, double z, double u, double p, double q) {
  return hamiltonian_H(m, 0.3, StateView(&x, 1), z, ControlView(&u, 1), std::span<const double>(&p, 1),
                       std::span<const double>(&q, 1));
}

double scriptH1(const ProblemModel& m, double x, double z, double u, double p, double q, double P,
                double sigma_bar) {
  return hamiltonian_script_H(m, 0.3, StateView(&x, 1), z, ControlView(&u, 1),
                              std::span<const double>(&p, 1), std::span<const double>(&q, 1),
                              std::span<const double>(&P, 1), std::span<const double>(&sigma_bar, 1));
}

}  // namespace

TEST_CASE("closed-form adjoints of the first example") {
  const auto ex = example_5_1();
  const PathBundle b = optimal_bundle(ex, 10, 2);
  const AdjointPath a = closed_form_adjoints(ex, b);
  CHECK(a.source == AdjointPath::Source::closed_form);
  for (std::size_t k = 0; k <= 10; ++k) {
    CHECK(a.p_at(k, 0)[0] == 0.5);
    CHECK(a.q_at(k, 0)[0] == 0.0);
    CHECK(a.P_at(k, 0)[0] == -0.5);
    CHECK(a.Q_at(k, 0)[0] == 0.0);
  }
}

TEST_CASE("numeric adjoints match the closed forms") {
  for (const auto& ex : {example_5_1(), example_5_1(1.0, 0.0), example_5_1(2.0, -0.7), example_5_2()}) {
    CAPTURE(ex.id);
    CAPTURE(ex.x0);
    const PathBundle b = optimal_bundle(ex, 200, 4);
    const AdjointPath num = solve_adjoints(ex.model, b, derivatives_with_fallback(ex.model));
    CHECK(num.source == AdjointPath::Source::linear_bsde_solve);
    const AdjointComparison c = compare_adjoints(num, closed_form_adjoints(ex, b));
    CHECK(c.max_p_error <= 5e-3);
    CHECK(c.max_P_error <= 5e-3);
    CHECK(c.max_q_error <= 5e-3);
    CHECK(c.max_Q_error <= 5e-3);
    CHECK(c.max_P_asymmetry <= 1e-10);
    // Terminal conditions: p = h_x, P = h_xx.
    const double xN = b.x(200, 0);
    CHECK(num.p_at(200, 0)[0] == doctest::Approx(1.0 / (1.0 + xN * xN)).epsilon(1e-8));
    CHECK(num.P_at(200, 0)[0] == doctest::Approx(-2.0 * xN / ((1.0 + xN * xN) * (1.0 + xN * xN))).epsilon(1e-6));
  }
}

TEST_CASE("linear terminal cost without state dependence") {
  const auto m = testing::scalar_model(testing::zero, [](double, double, double u) { return u; },
                                       [](double, double, double u) { return u * u; },
                                       [](double x) { return 0.3 * x; }, {0.0, 1.0}, 1.5);
  PathBundle b = simulate_paths(m, Policy::constant(1), std::vector<double>{0.2}, 50, 2000, 3);
  attach(b, solve_by_transform(m, b));
  const AdjointPath a = solve_adjoints(m, b, derivatives_with_fallback(m));
  for (std::size_t k = 0; k <= 50; k += 10)
    for (std::size_t i = 0; i < 2000; i += 97) {
      CHECK(a.p_at(k, i)[0] == doctest::Approx(0.3).epsilon(1e-9));
      CHECK(std::fabs(a.q_at(k, i)[0]) <= 1e-8);
      CHECK(std::fabs(a.P_at(k, i)[0]) <= 1e-8);
      CHECK(std::fabs(a.Q_at(k, i)[0]) <= 1e-8);
    }
}

TEST_CASE("Hamiltonian H by hand") {
  const auto zero = testing::scalar_model(testing::zero, testing::zero, testing::zero,
                                          [](double) { return 0.0; }, {0.0});
  CHECK(H1(zero, 0.7, 0.4, 0.0, 2.0, 3.0) == 0.0);
  const auto m1 = example_5_1().model;
  CHECK(H1(m1, -0.4, 0.0, 1.0, 1.0, 0.0) == 1.0);
  const auto m2 = example_5_2().model;
  CHECK(H1(m2, 1.0, 0.0, 1.0, 0.5, 0.0) == 0.0);
  CHECK(H1(m2, 1.0, 0.2, 1.0, 0.5, 0.1) == doctest::Approx(0.1 + 2.0 * 0.5 * 0.2));
}

TEST_CASE("script H by hand") {
  const auto m1 = example_5_1().model;
  // sigma(u) = sigma_bar: the correction vanishes.
  CHECK(scriptH1(m1, 1.0, 0.3, 1.0, 0.5, 0.2, -0.5, 1.0) == H1(m1, 1.0, 0.3, 1.0, 0.5, 0.2));
  CHECK(scriptH1(m1, 1.0, 0.0, 1.0, 0.5, 0.0, -0.5, 0.0) == doctest::Approx(7.0 / 8.0).epsilon(1e-15));
  CHECK(scriptH1(m1, 1.0, 0.0, 0.0, 0.5, 0.0, -0.5, 0.0) == 0.0);
  const auto m2 = example_5_2().model;
  CHECK(std::fabs(scriptH1(m2, 1.0, 0.0, 1.0, 0.5, 0.0, -0.5, 0.0)) <= 1e-15);
  CHECK(scriptH1(m2, 1.0, 0.0, 0.0, 0.5, 0.0, -0.5, 0.0) == 0.0);
}

TEST_CASE("maximum condition holds along the optimum") {
  for (const auto& ex : {example_5_1(), example_5_2()}) {
    CAPTURE(ex.id);
    const PathBundle b = optimal_bundle(ex, 100, 3);
    for (const auto& adj : {closed_form_adjoints(ex, b),
                            solve_adjoints(ex.model, b, derivatives_with_fallback(ex.model))}) {
      const MaximumConditionReport r = verify_maximum_condition(ex.model, b, adj);
      CHECK(r.cells == 300);
      CHECK(r.pass_fraction == 1.0);
      CHECK(r.worst_violation <= 1e-12);
      CHECK(r.worst_table.size() == 2);
    }
    if (ex.id == "5.2") {
      const MaximumConditionReport r = verify_maximum_condition(ex.model, b, closed_form_adjoints(ex, b));
      CHECK(r.min_equality_gap <= 1e-10);
    }
  }
}

TEST_CASE("script H equals H at the applied control") {
  const auto ex = example_5_2();
  const PathBundle b = optimal_bundle(ex, 20, 200, 1);
  const AdjointPath a = closed_form_adjoints(ex, b);
  for (std::size_t k = 0; k < 20; ++k) {
    const StateView x = b.state(k, 0);
    std::vector<double> sb(1);
    const ControlView u = ex.model.controls()[1];
    ex.model.diffusion(b.time_grid[k], x, u, sb);
    const double z = b.Z[k * b.n_paths];
    CHECK(hamiltonian_script_H(ex.model, b.time_grid[k], x, z, u, a.p_at(k, 0), a.q_at(k, 0), a.P_at(k, 0), sb) ==
          hamiltonian_H(ex.model, b.time_grid[k], x, z, u, a.p_at(k, 0), a.q_at(k, 0)));
  }
}

TEST_CASE("a suboptimal policy is flagged") {
  const auto ex = example_5_1();
  const PathBundle b = optimal_bundle(ex, 50, 2000, 1);
  const AdjointPath a = solve_adjoints(ex.model, b, derivatives_with_fallback(ex.model));
  const MaximumConditionReport r = verify_maximum_condition(ex.model, b, a, 1e-8, 10);
  CHECK(r.cells == 50 * 200);
  CHECK(r.pass_fraction < 1.0);
  CHECK(r.worst_violation > 0.5);
  CHECK(r.worst_table[1] > r.worst_table[0]);
}

TEST_CASE("adjoint preconditions") {
  const auto ex = example_5_1();
  const std::vector<double> x0{1.0};
  const PathBundle bare = simulate_paths(ex.model, Policy::constant(0), x0, 10, 2, 1);
  CHECK_THROWS_AS(solve_adjoints(ex.model, bare, derivatives_with_fallback(ex.model)), SolverError);
  const PathBundle b = optimal_bundle(ex, 10, 2);
  ModelDerivatives partial = derivatives_with_fallback(ex.model);
  partial.terminal_cost_hessian = nullptr;
  try {
    solve_adjoints(ex.model, b, partial);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("terminal_cost_hessian") != std::string::npos);
  }
  CHECK(to_string(AdjointPath::Source::linear_bsde_solve) == "linear_bsde_solve");
}
