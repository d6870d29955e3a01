#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

#include "helpers.hpp"
#include "oracles.hpp"
#include "rsc/error.hpp"
#include "rsc/fixtures.hpp"
#include "rsc/kernels.hpp"
#include "rsc/montecarlo.hpp"
#include "rsc/parallel.hpp"

using namespace rsc;

namespace {

const std::vector<double> one_x{1.0};

template <class T>
bool same_bits(const std::vector<T>& a, const std::vector<T>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(T)) == 0;
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / v.size();
}

}  // namespace

TEST_CASE("zero dynamics keep every path at x0") {
  const auto ex = example_5_1();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(0), one_x, 50, 64, 3);
  CHECK(b.time_grid.size() == 51);
  CHECK(b.X.size() == 51 * 64);
  CHECK(b.u.size() == 50 * 64);
  CHECK(b.dW.size() == 50 * 64);
  for (double x : b.X) CHECK(x == 1.0);
  const CostEstimate c = risk_sensitive_cost(ex.model, b);
  CHECK(c.value == doctest::Approx(std::atan(1.0)).epsilon(1e-15));
  CHECK(c.std_error == 0.0);
  CHECK(c.n_paths == 64);
}

TEST_CASE("bundle invariants") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 20, 100, 9);
  for (std::size_t i = 0; i < b.n_paths; ++i) CHECK(b.x(0, i) == 1.0);
  for (std::size_t k = 0; k < b.n_steps; ++k) CHECK(b.time_grid[k + 1] > b.time_grid[k]);
  CHECK(b.time_grid.front() == 0.0);
  CHECK(b.time_grid.back() == 1.0);
  for (std::size_t k = 0; k < b.n_steps; ++k)
    for (std::size_t i = 0; i < b.n_paths; ++i) CHECK(b.control(k, i) == 1);
}

TEST_CASE("geometric Brownian motion moments") {
  const auto ex = example_5_2();
  const std::size_t n = 100000, steps = 100;
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, steps, n, 11);
  double sum = 0, sum2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = b.x(steps, i);
    sum += x;
    sum2 += x * x;
  }
  const double mean = sum / n;
  const double var = sum2 / n - mean * mean;
  CHECK(std::fabs(mean - 1.0) <= 3.0 * std::sqrt(var / n));
  const double exact_var = oracle::gbm_second_moment(1.0, 1.0, 1.0) - 1.0;
  CHECK(std::fabs(var - exact_var) <= 0.05 * exact_var);
  // The Euler second moment is known exactly; compare with its sampling error.
  const double euler_m2 = oracle::euler_gbm_second_moment(1.0, 1.0, 1.0, steps);
  CHECK(std::fabs(sum2 / n - euler_m2) <= 0.05 * euler_m2);
}

TEST_CASE("constant costs give the constant for any risk parameter") {
  for (double mu : {0.1, 1.0, 7.0}) {
    const auto m = testing::scalar_model(testing::zero, testing::one, testing::zero,
                                         [](double) { return 0.3; }, {0.0, 1.0}, mu);
    const PathBundle b = simulate_paths(m, Policy::constant(1), one_x, 10, 500, 2);
    const CostEstimate c = risk_sensitive_cost(m, b);
    CHECK(c.value == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(c.std_error == 0.0);
  }
}

TEST_CASE("log-mean-exp is finite for large costs") {
  std::vector<double> costs{800.0, 900.0, 1000.0};
  const CostEstimate c = estimate_risk_cost(costs, 1.0);
  CHECK(std::isfinite(c.value));
  CHECK(c.value == doctest::Approx(1000.0 + std::log((std::exp(-200.0) + std::exp(-100.0) + 1.0) / 3.0)));
  CHECK(std::isfinite(c.std_error));
}

TEST_CASE("Jensen: cost is nondecreasing in mu and above the mean") {
  oracle::Gen g(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> costs(200);
    for (double& c : costs) c = g.uniform(-3, 3) * g.uniform(0, 2);
    const double mean = mean_of(costs);
    double prev = -std::numeric_limits<double>::infinity();
    for (double mu : {0.05, 0.2, 0.7, 1.5, 4.0}) {
      const double j = estimate_risk_cost(costs, mu).value;
      CHECK(j >= mean - 1e-12);
      CHECK(j >= prev - 1e-12);
      prev = j;
    }
  }
}

TEST_CASE("cost samples match path costs") {
  const auto ex = example_5_2();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 30, 257, 13);
  const auto direct = cost_samples(ex.model, Policy::constant(1), one_x, 30, 257, 13);
  CHECK(same_bits(path_costs(ex.model, b), direct));
}

TEST_CASE("seed determinism is bitwise and independent of the thread count") {
  const auto ex = example_5_2();
  const Policy feedback = Policy::feedback([](double, StateView x) { return x[0] > 1.0 ? 0u : 1u; });
  set_max_threads(1);
  const PathBundle a = simulate_paths(ex.model, feedback, one_x, 40, 3000, 77);
  set_max_threads(4);
  const PathBundle b = simulate_paths(ex.model, feedback, one_x, 40, 3000, 77);
  set_max_threads(0);
  CHECK(same_bits(a.X, b.X));
  CHECK(same_bits(a.dW, b.dW));
  CHECK(same_bits(a.u, b.u));
  const CostEstimate ca = risk_sensitive_cost(ex.model, a), cb = risk_sensitive_cost(ex.model, b);
  CHECK(std::memcmp(&ca.value, &cb.value, sizeof(double)) == 0);
  CHECK(std::memcmp(&ca.std_error, &cb.std_error, sizeof(double)) == 0);
  const PathBundle c = simulate_paths(ex.model, feedback, one_x, 40, 3000, 78);
  CHECK_FALSE(same_bits(a.dW, c.dW));
}

TEST_CASE("determinism across kernel tables") {
  const auto ex = example_5_2();
  const auto& before = kernels::active();
  kernels::force_isa(kernels::Isa::scalar);
  const PathBundle a = simulate_paths(ex.model, Policy::constant(1), one_x, 25, 999, 4);
  if (kernels::cpu_supports(kernels::Isa::avx2)) {
    kernels::force_isa(kernels::Isa::avx2);
    const PathBundle b = simulate_paths(ex.model, Policy::constant(1), one_x, 25, 999, 4);
    CHECK(same_bits(a.X, b.X));
  }
  kernels::force_isa(before.isa);
}

TEST_CASE("open-loop and feedback policies") {
  const auto ex = example_5_1();
  std::vector<std::size_t> seq(10, 0);
  seq[3] = 1;
  const PathBundle b = simulate_paths(ex.model, Policy::open_loop(seq), one_x, 10, 8, 1);
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(b.control(3, i) == 1);
    CHECK(b.x(3, i) == 1.0);
    CHECK(b.x(4, i) == 1.0 + b.dw(3, i));
    CHECK(b.x(10, i) == b.x(4, i));
  }
  CHECK_THROWS(simulate_paths(ex.model, Policy::open_loop({0, 1}), one_x, 10, 8, 1));
  CHECK_THROWS(simulate_paths(ex.model, Policy::constant(2), one_x, 10, 8, 1));
}

TEST_CASE("invalid inputs") {
  const auto ex = example_5_1();
  CHECK_THROWS_AS(simulate_paths(ex.model, Policy::constant(0), std::vector<double>{50.0}, 10, 8, 1), ModelError);
  CHECK_THROWS_AS(simulate_paths(ex.model, Policy::constant(0), one_x, 0, 8, 1), ModelError);
  CHECK_THROWS_AS(simulate_paths(ex.model, Policy::constant(0), one_x, 10, 0, 1), ModelError);
  const auto blowup = testing::scalar_model([](double, double x, double) { return std::exp(x * 100.0); },
                                            testing::zero, testing::zero, [](double x) { return x; }, {0.0});
  CHECK_THROWS_AS(simulate_paths(blowup, Policy::constant(0), std::vector<double>{5.0}, 10, 4, 1),
                  NonFiniteError);
}

TEST_CASE("expansion residual vanishes for constant and deterministic costs") {
  const auto constant = testing::scalar_model(testing::zero, testing::one, testing::zero,
                                              [](double) { return 1.25; }, {0.0});
  const ExpansionTable t = small_mu_expansion_check(constant, Policy::constant(0), one_x,
                                                    {0.4, 0.2, 0.1, 0.05}, 10, 1000, 3);
  for (const auto& row : t.rows) {
    CHECK(row.variance == 0.0);
    CHECK(std::fabs(row.residual) <= 1e-14);
  }
  const auto det = testing::scalar_model(testing::one, testing::zero,
                                         [](double, double x, double) { return x * x; },
                                         [](double x) { return std::atan(x); }, {0.0});
  const ExpansionTable d = small_mu_expansion_check(det, Policy::constant(0), one_x, {1.0, 0.5}, 20, 50, 3);
  for (const auto& row : d.rows) {
    CHECK(row.cost == doctest::Approx(row.mean).epsilon(1e-14));
    CHECK(std::fabs(row.residual) <= 1e-13);
  }
}

TEST_CASE("expansion slope on a skewed cost") {
  const auto ex = example_5_1();
  const ExpansionTable t =
      small_mu_expansion_check(ex.model, Policy::constant(1), std::vector<double>{0.0},
                               {0.4, 0.2, 0.1, 0.05}, 50, 200000, 8);
  REQUIRE(t.slope.has_value());
  CHECK(*t.slope >= 1.7);
  for (const auto& row : t.rows) CHECK(row.prediction == doctest::Approx(row.mean + 0.5 * row.mu * row.variance));
}

TEST_CASE("expansion slope fit recovers a power law") {
  std::vector<ExpansionRow> rows;
  for (double mu : {0.4, 0.2, 0.1}) {
    ExpansionRow r;
    r.mu = mu;
    r.residual = -3.0 * mu * mu;
    rows.push_back(r);
  }
  const auto slope = fitted_slope(rows);
  REQUIRE(slope.has_value());
  CHECK(*slope == doctest::Approx(2.0).epsilon(1e-12));
  rows[1].residual = 0.0;
  CHECK_FALSE(fitted_slope(rows).has_value());
}

TEST_CASE("paths csv layout") {
  const auto ex = example_5_1();
  const PathBundle b = simulate_paths(ex.model, Policy::constant(0), one_x, 2, 3, 1);
  std::ostringstream out;
  write_paths_csv(out, ex.model, b, 2);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "path_id,k,s_k,x_1,u,dW");
  std::size_t rows = 0;
  std::string last;
  while (std::getline(in, line)) {
    ++rows;
    last = line;
  }
  CHECK(rows == 2 * 3);
  CHECK(last.rfind("1,2,1,1,,", 0) == 0);
}
