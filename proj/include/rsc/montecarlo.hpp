#pragma once

// Euler-Maruyama simulation of the controlled SDE and Monte Carlo estimates of
// the risk-sensitive cost mu^-1 log E exp(mu (int f ds + h(X_T))).

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsc/model.hpp"

namespace rsc {

// Control choice u_k = policy(k, s_k, X_k), returned as an index into U.
class Policy {
 public:
  using Feedback = std::function<std::size_t(double s, StateView x)>;

  static Policy constant(std::size_t index);
  static Policy feedback(Feedback fn, std::string description = "feedback");
  static Policy open_loop(std::vector<std::size_t> per_step);

  std::size_t choose(std::size_t step, double s, StateView x) const;
  // Index when the policy is constant.
  std::optional<std::size_t> constant_index() const { return constant_; }
  const std::string& description() const { return description_; }
  // Largest control index the policy can return, when known in advance.
  std::optional<std::size_t> max_index() const;

 private:
  std::optional<std::size_t> constant_;
  Feedback feedback_;
  std::vector<std::size_t> open_loop_;
  std::string description_;
};

// Time-major storage: entry (k, path i, component d) of X lives at
// X[(k * n_paths + i) * state_dim + d].
struct PathBundle {
  std::size_t n_steps = 0;
  std::size_t n_paths = 0;
  std::size_t state_dim = 1;
  std::uint64_t seed = 0;
  std::vector<double> time_grid;     // n_steps + 1 nodes
  std::vector<double> x0;
  std::vector<double> X;             // (n_steps + 1) * n_paths * state_dim
  std::vector<std::uint16_t> u;      // n_steps * n_paths
  std::vector<double> dW;            // n_steps * n_paths
  std::vector<double> Y;             // empty until a backward solver fills it; (n_steps + 1) * n_paths
  std::vector<double> Z;             // n_steps * n_paths

  double dt(std::size_t k) const { return time_grid[k + 1] - time_grid[k]; }
  StateView state(std::size_t k, std::size_t i) const {
    return StateView(X.data() + (k * n_paths + i) * state_dim, state_dim);
  }
  double x(std::size_t k, std::size_t i, std::size_t d = 0) const {
    return X[(k * n_paths + i) * state_dim + d];
  }
  std::size_t control(std::size_t k, std::size_t i) const { return u[k * n_paths + i]; }
  double dw(std::size_t k, std::size_t i) const { return dW[k * n_paths + i]; }
};

struct CostEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  double mu = 0.0;
};

// Uniform grid over the model horizon. Throws ModelError when x0 is outside
// the domain box or a size is zero; NonFiniteError names the (s, x, u) witness.
PathBundle simulate_paths(const ProblemModel& model, const Policy& policy, StateView x0,
                          std::size_t n_steps, std::size_t n_paths, std::uint64_t seed);

// Per-path realized cost sum_k f(s_k, X_k, u_k) ds + h(X_N) (left endpoint).
std::vector<double> path_costs(const ProblemModel& model, const PathBundle& bundle);

// Same values as path_costs(simulate_paths(...)) without storing the paths.
std::vector<double> cost_samples(const ProblemModel& model, const Policy& policy, StateView x0,
                                 std::size_t n_steps, std::size_t n_paths, std::uint64_t seed);

// mu^-1 log mean exp(mu c_i), shifted by max c_i so it never overflows.
CostEstimate estimate_risk_cost(std::span<const double> costs, double mu);
CostEstimate risk_sensitive_cost(const ProblemModel& model, const PathBundle& bundle);

struct ExpansionRow {
  double mu = 0.0;
  double cost = 0.0;        // J(mu)
  double mean = 0.0;        // E[J1]
  double variance = 0.0;    // Var(J1), population form of the samples
  double prediction = 0.0;  // E[J1] + mu/2 Var(J1)
  double residual = 0.0;    // J(mu) - prediction
};

struct ExpansionTable {
  std::vector<ExpansionRow> rows;
  // Least-squares slope of log|residual| against log mu; empty when any residual is 0.
  std::optional<double> slope;
};

// Common random numbers: one set of cost samples shared by every mu.
ExpansionTable small_mu_expansion_check(const ProblemModel& model, const Policy& policy,
                                        StateView x0, const std::vector<double>& mus,
                                        std::size_t n_steps, std::size_t n_paths,
                                        std::uint64_t seed);
ExpansionTable expansion_from_costs(std::span<const double> costs, const std::vector<double>& mus);
std::optional<double> fitted_slope(const std::vector<ExpansionRow>& rows);

// path_id,k,s_k,x_1..x_n,u (u_1..u_m when m > 1),dW; u and dW empty at k = N.
void write_paths_csv(std::ostream& out, const ProblemModel& model, const PathBundle& bundle,
                     std::size_t max_paths = static_cast<std::size_t>(-1));

}  // namespace rsc
