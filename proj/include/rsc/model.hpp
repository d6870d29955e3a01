#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rsc {

using StateView = std::span<const double>;
using ControlView = std::span<const double>;

// (s, x, u) -> R^n written into out.
using VectorCoefficient =
    std::function<void(double s, StateView x, ControlView u, std::span<double> out)>;
// (s, x, u) -> R
using ScalarCoefficient = std::function<double(double s, StateView x, ControlView u)>;
// x -> R
using TerminalFunction = std::function<double(StateView x)>;

struct Horizon {
  double start = 0.0;
  double end = 1.0;
  double length() const { return end - start; }
};

// Axis-aligned box; the truncated spatial domain for grid work.
struct Box {
  std::vector<double> lower;
  std::vector<double> upper;

  static Box cube(std::size_t dim, double lo, double hi);
  std::size_t dim() const { return lower.size(); }
  bool contains(StateView x, double margin = 0.0) const;
};

// Finite control set U, stored as points in R^m. Controls are referred to by index.
class ControlSet {
 public:
  ControlSet() = default;
  // Throws ModelError when empty, ragged, or containing duplicates.
  explicit ControlSet(const std::vector<std::vector<double>>& points);

  std::size_t size() const { return count_; }
  std::size_t dim() const { return dim_; }
  ControlView operator[](std::size_t index) const {
    return ControlView(points_.data() + index * dim_, dim_);
  }
  std::vector<std::vector<double>> points() const;

 private:
  std::size_t dim_ = 0;
  std::size_t count_ = 0;
  std::vector<double> points_;
};

// Optional declared constants used by the assumption spot-checks and the
// sup-norm bound proxies of the backward solvers.
struct DeclaredBounds {
  std::optional<double> state_lipschitz;  // L1 for b and sigma
  std::optional<double> cost_lipschitz;   // L2 for f and h
  std::optional<double> running_cost_sup;
  std::optional<double> terminal_cost_sup;
};

// Analytic x-derivatives (any subset). Matrices are n x n row-major,
// jacobian[i*n + j] = d(coef_i)/d(x_j). The *_hessian_contraction callbacks
// return sum_i w_i * d^2(coef_i)/dx^2 for the supplied weights w.
struct ModelDerivatives {
  VectorCoefficient drift_jacobian;
  VectorCoefficient diffusion_jacobian;
  VectorCoefficient running_cost_gradient;
  std::function<void(StateView x, std::span<double> out)> terminal_cost_gradient;
  std::function<void(double s, StateView x, ControlView u, StateView w, std::span<double> out)>
      drift_hessian_contraction;
  std::function<void(double s, StateView x, ControlView u, StateView w, std::span<double> out)>
      diffusion_hessian_contraction;
  VectorCoefficient running_cost_hessian;
  std::function<void(StateView x, std::span<double> out)> terminal_cost_hessian;

  // Names of callbacks that are not set.
  std::vector<std::string> missing() const;
};

struct ModelSpec {
  std::string name = "custom";
  std::size_t state_dim = 1;
  VectorCoefficient drift;
  VectorCoefficient diffusion;
  ScalarCoefficient running_cost;
  TerminalFunction terminal_cost;
  double risk = 1.0;
  std::vector<std::vector<double>> controls;
  Horizon horizon;
  std::optional<Box> domain;  // defaults to [-6, 6]^n
  DeclaredBounds bounds;
  ModelDerivatives derivatives;
  // Coefficients do not depend on s; lets grid solvers tabulate them once.
  bool time_homogeneous = false;
};

// The controlled SDE dX = b ds + sigma dW (scalar W), running cost f,
// terminal cost h, risk parameter mu > 0 and a finite control set.
// Immutable after construction; coefficient callbacks must be pure.
class ProblemModel {
 public:
  // Validates: n >= 1, all callbacks set, mu > 0, U nonempty/duplicate-free,
  // 0 <= t0 < T, domain box of dimension n with lower < upper.
  explicit ProblemModel(ModelSpec spec);

  const std::string& name() const { return spec_.name; }
  std::size_t state_dim() const { return spec_.state_dim; }
  std::size_t control_dim() const { return controls_.dim(); }
  double risk() const { return spec_.risk; }
  const ControlSet& controls() const { return controls_; }
  const Horizon& horizon() const { return spec_.horizon; }
  const Box& domain() const { return *spec_.domain; }
  const DeclaredBounds& bounds() const { return spec_.bounds; }
  const ModelDerivatives& derivatives() const { return spec_.derivatives; }
  bool time_homogeneous() const { return spec_.time_homogeneous; }
  const ModelSpec& spec() const { return spec_; }

  void drift(double s, StateView x, ControlView u, std::span<double> out) const {
    spec_.drift(s, x, u, out);
  }
  void diffusion(double s, StateView x, ControlView u, std::span<double> out) const {
    spec_.diffusion(s, x, u, out);
  }
  double running_cost(double s, StateView x, ControlView u) const {
    return spec_.running_cost(s, x, u);
  }
  double terminal_cost(StateView x) const { return spec_.terminal_cost(x); }

  // Variants sharing everything else.
  ProblemModel with_risk(double mu) const;
  ProblemModel with_controls(const std::vector<std::vector<double>>& controls) const;
  ProblemModel with_costs(ScalarCoefficient running, TerminalFunction terminal) const;
  ProblemModel with_horizon(Horizon horizon) const;
  ProblemModel with_domain(Box domain) const;
  ProblemModel with_bounds(DeclaredBounds bounds) const;

 private:
  ModelSpec spec_;
  ControlSet controls_;
};

// Complete derivative set: analytic callbacks where the model provides them,
// central differences (one Richardson step) elsewhere.
ModelDerivatives derivatives_with_fallback(const ProblemModel& model);

enum class CheckStatus { pass, fail, skipped };

struct AssumptionCheck {
  std::string name;
  CheckStatus status = CheckStatus::skipped;
  double max_observed = 0.0;
  std::optional<double> declared;
  // Worst witness: time, first and second state, control index.
  double witness_s = 0.0;
  std::vector<double> witness_x1;
  std::vector<double> witness_x2;
  std::size_t witness_control = 0;
};

struct AssumptionReport {
  std::vector<AssumptionCheck> checks;  // b/sigma/f/h Lipschitz, f/h bounded
  const AssumptionCheck& at(const std::string& name) const;
  bool all_passed() const;  // skipped checks count as passed
};

// Samples (s, x1, x2, u) uniformly over the horizon, the box (defaults to the
// model domain) and U. Purely diagnostic.
AssumptionReport validate_assumptions(const ProblemModel& model, std::size_t samples,
                                      std::uint64_t seed, std::optional<Box> box = std::nullopt);

std::string to_string(CheckStatus status);

}  // namespace rsc
