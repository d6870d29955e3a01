#pragma once

// First- and second-order adjoint processes along an optimal trajectory,
// the Hamiltonians H and script-H, and the maximum-condition check.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rsc/fixtures.hpp"
#include "rsc/model.hpp"
#include "rsc/montecarlo.hpp"
#include "rsc/regression.hpp"

namespace rsc {

// Per (step k, path i): p, q in R^n at [(k * n_paths + i) * n], P, Q as
// n x n row-major at [(k * n_paths + i) * n * n]. Steps run 0..n_steps; the
// numeric q, Q at the final node repeat the last step.
struct AdjointPath {
  enum class Source { closed_form, linear_bsde_solve };
  Source source = Source::closed_form;
  std::size_t n_steps = 0;
  std::size_t n_paths = 0;
  std::size_t dim = 1;
  std::vector<double> time_grid;
  std::vector<double> p, q, P, Q;

  std::span<const double> p_at(std::size_t k, std::size_t i) const {
    return {p.data() + (k * n_paths + i) * dim, dim};
  }
  std::span<const double> q_at(std::size_t k, std::size_t i) const {
    return {q.data() + (k * n_paths + i) * dim, dim};
  }
  std::span<const double> P_at(std::size_t k, std::size_t i) const {
    return {P.data() + (k * n_paths + i) * dim * dim, dim * dim};
  }
  std::span<const double> Q_at(std::size_t k, std::size_t i) const {
    return {Q.data() + (k * n_paths + i) * dim * dim, dim * dim};
  }
};

std::string to_string(AdjointPath::Source source);

// The bundle must carry Z from a backward solver. Throws ModelError listing
// missing derivative callbacks (use derivatives_with_fallback to fill them).
AdjointPath solve_adjoints(const ProblemModel& model, const PathBundle& bundle,
                           const ModelDerivatives& derivatives,
                           const PolynomialBasis& basis = {});

// Analytic adjoints of a fixture sampled on the bundle's grid.
AdjointPath closed_form_adjoints(const ClosedFormExample& example, const PathBundle& bundle);

struct AdjointComparison {
  double max_p_error = 0.0;
  double max_q_error = 0.0;
  double max_P_error = 0.0;
  double max_Q_error = 0.0;
  double max_P_asymmetry = 0.0;  // of the first argument
};

AdjointComparison compare_adjoints(const AdjointPath& a, const AdjointPath& b);

// <p, b> + f + q^T sigma + mu (sigma^T p) z
double hamiltonian_H(const ProblemModel& model, double s, StateView x, double z, ControlView u,
                     std::span<const double> p, std::span<const double> q);

// H + (1/2) (sigma - sigma_bar)^T (P + mu p p^T) (sigma - sigma_bar)
double hamiltonian_script_H(const ProblemModel& model, double s, StateView x, double z,
                            ControlView u, std::span<const double> p,
                            std::span<const double> q, std::span<const double> P,
                            std::span<const double> sigma_bar);

struct MaximumConditionReport {
  std::size_t cells = 0;
  std::size_t passed = 0;
  double pass_fraction = 0.0;
  double tolerance = 0.0;
  double worst_violation = 0.0;  // max over cells and u of H(u_bar) - H(u)
  std::size_t worst_step = 0;
  std::size_t worst_path = 0;
  double worst_s = 0.0;
  std::vector<double> worst_x;
  std::vector<double> worst_table;  // script-H(u) for every u at the worst cell
  // min over cells and u != u_bar of |H(u) - H(u_bar)|; infinity if |U| = 1.
  double min_equality_gap = 0.0;
};

// Checks script-H(u_bar) <= script-H(u) + tol for every u in U at every
// path_stride-th path and every step k < N.
MaximumConditionReport verify_maximum_condition(const ProblemModel& model,
                                                const PathBundle& bundle,
                                                const AdjointPath& adjoints,
                                                double tolerance = 1e-8,
                                                std::size_t path_stride = 1);

}  // namespace rsc
