#pragma once

// Backward solvers on a simulated PathBundle:
//   dY = -[f + (mu/2) Z^2] ds + Z dW,  Y(T) = h(X(T))
// by the exponential transform (oracle) and by explicit backward regression,
// plus a vector linear BSDE solver with per-path affine generators.

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "rsc/model.hpp"
#include "rsc/montecarlo.hpp"
#include "rsc/regression.hpp"

namespace rsc {

enum class BackwardMethod { transform, regression, linear };

std::string to_string(BackwardMethod method);

// Y at (k, path i, component j) is Y[(k * n_paths + i) * dim + j]; Z likewise
// with k < n_steps.
struct BackwardSolution {
  BackwardMethod method = BackwardMethod::transform;
  std::string basis;
  std::size_t n_steps = 0;
  std::size_t n_paths = 0;
  std::size_t dim = 1;
  std::vector<double> Y;
  std::vector<double> Z;
  double y0 = 0.0;            // path average of Y(s_0), first component
  double y0_std_error = 0.0;

  double y(std::size_t k, std::size_t i, std::size_t j = 0) const {
    return Y[(k * n_paths + i) * dim + j];
  }
  double z(std::size_t k, std::size_t i, std::size_t j = 0) const {
    return Z[(k * n_paths + i) * dim + j];
  }
  double max_abs_y() const;
};

// Conditional expectations of exp(mu * realized cost-to-go), then Y = log(.)/mu.
// Throws NonPositiveTransformError when a fitted expectation is <= 0.
BackwardSolution solve_by_transform(const ProblemModel& model, const PathBundle& bundle,
                                    const PolynomialBasis& basis = {});

struct RegressionOptions {
  PolynomialBasis basis;
  std::size_t error_batches = 20;  // independent sub-solves for the Y(0) standard error; 0 skips
  double divergence_factor = 10.0;
};

// Explicit-in-Z backward induction. Throws RankDeficientError or
// DivergenceError (|Y| above divergence_factor times the sup-norm proxy).
BackwardSolution solve_by_regression(const ProblemModel& model, const PathBundle& bundle,
                                     const RegressionOptions& options = {});

// ||h|| + T ||f|| from declared bounds, else from the values seen on the bundle.
double sup_norm_proxy(const ProblemModel& model, const PathBundle& bundle);

// Copies Y and Z of a scalar solution into the bundle.
void attach(PathBundle& bundle, const BackwardSolution& solution);

// Generator A y + B z + c with d x d row-major A, B.
struct AffineGenerator {
  std::size_t dim = 1;
  std::function<void(std::size_t k, std::size_t i, std::span<double> A, std::span<double> B,
                     std::span<double> c)>
      coefficients;
};

// terminal holds n_paths rows of dim values. Throws DivergenceError when
// |Y| exceeds 1e6 (1 + max |terminal|).
BackwardSolution solve_linear_bsde(const PathBundle& bundle, std::span<const double> terminal,
                                   const AffineGenerator& generator,
                                   const PolynomialBasis& basis = {});

struct StabilityReport {
  double sup_y_difference = 0.0;   // over all paths and steps
  double sup_h_difference = 0.0;   // over terminal states of the bundle
  double int_f_difference = 0.0;   // sum_k dt * max_i |f1 - f2|
  double ratio = 0.0;              // sup_y / (sup_h + int_f); 0 when both vanish
};

// Transform-solver outputs under (f1, h1) and (f2, h2) on one bundle.
StabilityReport stability_check(const ProblemModel& model, const PathBundle& bundle,
                                const ScalarCoefficient& f1, const TerminalFunction& h1,
                                const ScalarCoefficient& f2, const TerminalFunction& h2,
                                const PolynomialBasis& basis = {});

}  // namespace rsc
