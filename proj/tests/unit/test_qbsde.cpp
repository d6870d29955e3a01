#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rsc/error.hpp"
#include "rsc/fixtures.hpp"
#include "rsc/montecarlo.hpp"
#include "rsc/qbsde.hpp"

using namespace rsc;

namespace {

const std::vector<double> one_x{1.0};
const double pi = std::acos(-1.0);

double combined_se(const BackwardSolution& a, const BackwardSolution& b) {
  return std::sqrt(a.y0_std_error * a.y0_std_error + b.y0_std_error * b.y0_std_error);
}

}  // namespace

TEST_CASE("constant terminal data") {
  const auto m = testing::scalar_model(testing::zero, testing::one, testing::zero,
                                       [](double) { return -0.7; }, {0.0, 1.0}, 2.0);
  const PathBundle b = simulate_paths(m, Policy::constant(1), one_x, 20, 400, 5);
  for (const auto& sol : {solve_by_transform(m, b), solve_by_regression(m, b)}) {
    for (double y : sol.Y) CHECK(y == doctest::Approx(-0.7).epsilon(1e-14));
    for (double z : sol.Z) CHECK(std::fabs(z) <= 1e-14);
  }
}

TEST_CASE("deterministic paths of the first example") {
  const auto ex = example_5_1();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(0), one_x, 50, 100, 1);
  const BackwardSolution t = solve_by_transform(ex.model, b);
  const BackwardSolution r = solve_by_regression(ex.model, b);
  CHECK(t.y0 == doctest::Approx(pi / 4).epsilon(1e-14));
  CHECK(std::fabs(t.y0 - r.y0) <= 1e-10);
  for (double z : t.Z) CHECK(z == 0.0);
  for (double z : r.Z) CHECK(z == 0.0);
  CHECK(t.method == BackwardMethod::transform);
  CHECK(r.method == BackwardMethod::regression);
}

TEST_CASE("terminal condition is exact for every method") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 20, 2000, 8);
  for (const auto& sol : {solve_by_transform(ex.model, b), solve_by_regression(ex.model, b)}) {
    for (std::size_t i = 0; i < b.n_paths; ++i) {
      const double h = ex.model.terminal_cost(b.state(b.n_steps, i));
      CHECK(sol.y(b.n_steps, i) == h);
    }
  }
}

TEST_CASE("linear terminal cost has an explicit solution") {
  const double mu = 1.0;
  const auto m = testing::scalar_model(testing::zero, testing::one, testing::zero,
                                       [](double x) { return x; }, {0.0}, mu);
  const PathBundle b = simulate_paths(m, Policy::constant(0), std::vector<double>{0.5}, 40, 20000, 21);
  const BackwardSolution r = solve_by_regression(m, b, RegressionOptions{PolynomialBasis{1, 1e-8}});
  double ss = 0.0, mean_z = 0.0;
  for (std::size_t k = 0; k <= b.n_steps; ++k) {
    const double shift = 0.5 * mu * (1.0 - b.time_grid[k]);
    for (std::size_t i = 0; i < b.n_paths; ++i) ss += std::pow(r.y(k, i) - b.x(k, i) - shift, 2);
  }
  const double rms_y = std::sqrt(ss / static_cast<double>((b.n_steps + 1) * b.n_paths));
  for (double z : r.Z) mean_z += z;
  mean_z /= static_cast<double>(r.Z.size());
  CHECK(r.y0 == doctest::Approx(1.0).epsilon(2e-2));
  CHECK(rms_y <= 1e-2);
  CHECK(std::fabs(mean_z - 1.0) <= 2e-2);
}

TEST_CASE("transform and regression agree on a stochastic fixture") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 50, 20000, 17);
  const BackwardSolution t = solve_by_transform(ex.model, b);
  const BackwardSolution r = solve_by_regression(ex.model, b, RegressionOptions{PolynomialBasis{1, 1e-8, 20}});
  CHECK(t.y0_std_error > 0.0);
  CHECK(r.y0_std_error > 0.0);
  CHECK(std::fabs(t.y0 - r.y0) <= 3.0 * combined_se(t, r));
  // Cost of the policy, so the value pi/4 of the zero policy is not beaten by much.
  CHECK(t.y0 == doctest::Approx(risk_sensitive_cost(ex.model, b).value).epsilon(1e-12));
}

TEST_CASE("bounded by the sup-norm proxy") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 30, 5000, 3);
  const double proxy = sup_norm_proxy(ex.model, b);
  CHECK(proxy == doctest::Approx(pi / 2).epsilon(1e-3));
  CHECK(solve_by_transform(ex.model, b).max_abs_y() <= proxy + 1e-12);
  // The explicit Z scheme is only bounded on average; single paths overshoot.
  const BackwardSolution r = solve_by_regression(ex.model, b, RegressionOptions{PolynomialBasis{1, 1e-8, 10}});
  for (std::size_t k = 0; k <= b.n_steps; ++k) {
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < b.n_paths; ++i) mean_abs += std::fabs(r.y(k, i));
    CHECK(mean_abs / static_cast<double>(b.n_paths) <= proxy);
  }
}

TEST_CASE("comparison principle for the transform solver") {
  oracle::Gen g(31);
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 20, 1000, 4);
  for (int trial = 0; trial < 10; ++trial) {
    const double a = g.uniform(0, 1), c = g.uniform(0, 0.5), w = g.uniform(0.5, 3);
    const auto h1 = [a, w](StateView x) { return a * std::sin(w * x[0]); };
    const auto h2 = [a, w, c](StateView x) { return a * std::sin(w * x[0]) + c * (1 + std::cos(x[0])); };
    const auto f1 = [a](double, StateView x, ControlView) { return a * x[0] * x[0]; };
    const auto f2 = [a, c](double s, StateView x, ControlView) { return a * x[0] * x[0] + c * s; };
    const auto y1 = solve_by_transform(ex.model.with_costs(f1, h1), b).y0;
    const auto y2 = solve_by_transform(ex.model.with_costs(f2, h2), b).y0;
    CHECK(y1 <= y2 + 1e-12);
  }
}

TEST_CASE("stability check") {
  const auto ex1 = example_5_1();
  const auto f = [](double, StateView, ControlView u) { return u[0] * u[0]; };
  const auto h = [](StateView x) { return std::atan(x[0]); };
  const auto h_shift = [](StateView x) { return std::atan(x[0]) + 0.01; };
  const PathBundle det = simulate_paths(ex1.model, Policy::constant(0), one_x, 20, 50, 2);
  CHECK(stability_check(ex1.model, det, f, h, f, h).sup_y_difference == 0.0);
  CHECK(stability_check(ex1.model, det, f, h, f, h).ratio == 0.0);
  const StabilityReport shifted = stability_check(ex1.model, det, f, h, f, h_shift);
  CHECK(shifted.sup_y_difference == doctest::Approx(0.01).epsilon(1e-10));
  CHECK(shifted.sup_h_difference == doctest::Approx(0.01).epsilon(1e-12));

  const auto ex2 = example_5_2();
  const auto zero_f = [](double, StateView, ControlView) { return 0.0; };
  const PathBundle b = simulate_paths(ex2.model, Policy::constant(1), one_x, 20, 5000, 6);
  for (double eps : {0.1, 0.01}) {
    const auto h_eps = [eps](StateView x) { return std::atan(x[0]) + eps; };
    const StabilityReport r = stability_check(ex2.model, b, zero_f, h, zero_f, h_eps);
    CHECK(r.sup_y_difference / eps >= 0.5);
    CHECK(r.sup_y_difference / eps <= 2.0);
  }
}

TEST_CASE("linear BSDE with constant data") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 10, 500, 2);
  std::vector<double> xi(500, 2.5);
  AffineGenerator gen{1, [](std::size_t, std::size_t, std::span<double> A, std::span<double> B,
                            std::span<double> c) {
                        A[0] = 0;
                        B[0] = 0;
                        c[0] = 0;
                      }};
  const BackwardSolution s = solve_linear_bsde(b, xi, gen);
  for (double y : s.Y) CHECK(y == 2.5);
  for (double z : s.Z) CHECK(z == 0.0);
}

TEST_CASE("linear BSDE reproduces the backward ODE") {
  const auto ex = example_5_1();
  const std::size_t N = 1000;
  const PathBundle b = simulate_paths(ex.model, Policy::constant(0), one_x, N, 4, 2);
  const double a = 0.8;
  std::vector<double> xi(4, 1.0);
  AffineGenerator gen{1, [a](std::size_t, std::size_t, std::span<double> A, std::span<double> B,
                             std::span<double> c) {
                        A[0] = a;
                        B[0] = 0;
                        c[0] = 0;
                      }};
  const BackwardSolution s = solve_linear_bsde(b, xi, gen);
  for (std::size_t k = 0; k <= N; k += 50) {
    CHECK(s.y(k, 0) == doctest::Approx(oracle::linear_ode_discrete(a, 1.0, N, k)).epsilon(1e-12));
    CHECK(std::fabs(s.y(k, 0) - std::exp(a * (1.0 - b.time_grid[k]))) <= 2e-3);
  }
}

TEST_CASE("linear BSDE with a z coefficient") {
  const auto m = testing::scalar_model(testing::zero, testing::one, testing::zero,
                                       [](double x) { return x; }, {0.0});
  const PathBundle b = simulate_paths(m, Policy::constant(0), std::vector<double>{0.0}, 50, 20000, 12);
  const double beta = 0.6;
  std::vector<double> xi(b.n_paths);
  for (std::size_t i = 0; i < b.n_paths; ++i) xi[i] = b.x(b.n_steps, i);
  AffineGenerator gen{1, [beta](std::size_t, std::size_t, std::span<double> A, std::span<double> B,
                                std::span<double> c) {
                        A[0] = 0;
                        B[0] = beta;
                        c[0] = 0;
                      }};
  const BackwardSolution s = solve_linear_bsde(b, xi, gen, PolynomialBasis{1, 1e-8});
  double ss = 0.0, mean_z = 0.0;
  for (std::size_t k = 0; k <= b.n_steps; ++k)
    for (std::size_t i = 0; i < b.n_paths; ++i)
      ss += std::pow(s.y(k, i) - b.x(k, i) - beta * (1.0 - b.time_grid[k]), 2);
  for (double z : s.Z) mean_z += z;
  mean_z /= static_cast<double>(s.Z.size());
  CHECK(s.y0 == doctest::Approx(beta).epsilon(2e-2));
  CHECK(std::sqrt(ss / static_cast<double>((b.n_steps + 1) * b.n_paths)) <= 1e-2);
  CHECK(std::fabs(mean_z - 1.0) <= 2e-2);
}

TEST_CASE("vector linear BSDE decouples with a diagonal generator") {
  const auto ex = example_5_1();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(0), one_x, 100, 3, 2);
  std::vector<double> xi{1.0, 2.0, 1.0, 2.0, 1.0, 2.0};
  AffineGenerator gen{2, [](std::size_t, std::size_t, std::span<double> A, std::span<double> B,
                            std::span<double> c) {
                        std::fill(A.begin(), A.end(), 0.0);
                        std::fill(B.begin(), B.end(), 0.0);
                        A[0] = 1.0;
                        c[0] = 0.0;
                        c[1] = -2.0;
                      }};
  const BackwardSolution s = solve_linear_bsde(b, xi, gen);
  CHECK(s.y(0, 1, 0) == doctest::Approx(oracle::linear_ode_discrete(1.0, 1.0, 100, 0)));
  CHECK(s.y(0, 1, 1) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("solver failures") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 10, 4, 2);
  CHECK_THROWS_AS(solve_by_regression(ex.model, b), RankDeficientError);
  const PathBundle big = simulate_paths(ex.model, Policy::constant(1), one_x, 10, 2000, 2);
  RegressionOptions tight;
  tight.divergence_factor = 1e-3;
  CHECK_THROWS_AS(solve_by_regression(ex.model, big, tight), DivergenceError);
  std::vector<double> xi(2000, 1.0);
  AffineGenerator explode{1, [](std::size_t, std::size_t, std::span<double> A, std::span<double> B,
                                std::span<double> c) {
                            A[0] = 5000.0;
                            B[0] = 0;
                            c[0] = 0;
                          }};
  CHECK_THROWS_AS(solve_linear_bsde(big, xi, explode), DivergenceError);
  CHECK_THROWS_AS(solve_linear_bsde(big, std::vector<double>(3, 1.0), explode), SolverError);
}

TEST_CASE("attach copies Y and Z into the bundle") {
  const auto ex = example_5_2();
  PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 10, 300, 2);
  const BackwardSolution t = solve_by_transform(ex.model, b);
  attach(b, t);
  CHECK(b.Y == t.Y);
  CHECK(b.Z == t.Z);
}
