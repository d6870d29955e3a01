#pragma once

// Explicit monotone finite differences for
//   v_t + min_u G(t, x, u, v_x, v_xx) = 0,  v(T, x) = h(x),
//   G = f + <p, b> + (mu/2) |sigma^T p|^2 + (1/2) tr(sigma sigma^T P),
// on a truncated box, plus viscosity-residual diagnostics.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsc/model.hpp"

namespace rsc {

// P is n x n row-major; throws std::invalid_argument if asymmetric beyond 1e-12.
double hamiltonian_G(const ProblemModel& model, double s, StateView x, ControlView u,
                     std::span<const double> p, std::span<const double> P);

enum class BoundaryMode { extrapolate, dirichlet };

std::string to_string(BoundaryMode mode);
BoundaryMode parse_boundary_mode(const std::string& name);  // throws ConfigError

struct GridSpec {
  std::size_t n_t = 101;            // stored time slices, >= 2
  std::vector<std::size_t> n_x;     // nodes per dimension, >= 3 each; empty -> 241 per dim
  std::optional<Box> box;           // defaults to the model domain
};

struct HjbOptions {
  BoundaryMode boundary = BoundaryMode::extrapolate;
  double cfl_target = 0.9;
  // Adds half_mu * sigma^2 * |p| * dx to the diffusion so the centred
  // gradient term keeps the scheme monotone.
  bool artificial_viscosity = false;
  std::size_t max_substeps = 20'000'000;
};

struct SchemeMeta {
  double dt = 0.0;              // internal step
  std::vector<double> dx;
  double cfl = 0.0;             // max observed dt * (2 nu / dx^2 + |b| / dx), summed over dims
  std::size_t substeps = 0;     // per stored interval
  std::string boundary;
  bool artificial_viscosity = false;
  std::string note;
};

// Stored slices t_nodes[0..n_t); spatial nodes row-major with the last
// dimension fastest. V[ti * n_space() + flat].
struct ValueGrid {
  std::vector<double> t_nodes;
  std::vector<std::vector<double>> axes;
  std::vector<double> V;
  std::vector<std::int32_t> policy;  // argmin index into U; -1 where not computed
  SchemeMeta meta;

  std::size_t dim() const { return axes.size(); }
  std::size_t n_space() const;
  double value(std::size_t ti, std::size_t flat) const { return V[ti * n_space() + flat]; }
  // Linear in t, multilinear in x. Throws std::out_of_range outside the grid.
  double interpolate(double t, StateView x) const;
  double interpolate(double t, double x) const { return interpolate(t, StateView(&x, 1)); }
};

// Throws CflError when the step budget cannot satisfy the monotonicity
// bound, ModelError on bad grid sizes.
ValueGrid solve_hjb(const ProblemModel& model, const GridSpec& grid,
                    const HjbOptions& options = {});

// Closed-form values tabulated on a 1-D grid (policy left at -1).
ValueGrid tabulate_value_grid(const std::function<double(double t, double x)>& value,
                              const Horizon& horizon, std::size_t n_t,
                              const std::vector<double>& axis);

std::vector<double> uniform_axis(double lo, double hi, std::size_t n);

struct GridError {
  double max_error = 0.0;
  double t = 0.0;  // where the maximum occurs
  double x = 0.0;
  std::size_t nodes = 0;
};

// 1-D: max |V - reference| over all stored slices and the nodes at least
// margin_fraction * (box width) away from either end.
GridError max_interior_error(const ValueGrid& grid,
                             const std::function<double(double t, double x)>& reference,
                             double margin_fraction = 0.2);

// 1-D: max |V - reference| at the given (t, x) points, by interpolation.
GridError probe_error(const ValueGrid& grid,
                      const std::function<double(double t, double x)>& reference,
                      const std::vector<std::array<double, 2>>& points);

struct CandidateResidual {
  double q = 0.0;
  double p = 0.0;
  double P = 0.0;
  double value = 0.0;  // -q - min_u G(t, x, u, p, P)
};

struct ResidualPoint {
  double t = 0.0;
  double x = 0.0;
  bool kink = false;
  // Smooth points: V_t + min_u G with discrete derivatives.
  double smooth_residual = 0.0;
  // max of (-q - min G) over superjet candidates (subsolution needs <= 0);
  // empty when the superjet test is vacuous (convex kink).
  std::optional<double> sub_residual;
  // min of (-q - min G) over subjet candidates (supersolution needs >= 0).
  std::optional<double> super_residual;
  std::vector<CandidateResidual> candidates;  // kink points: every tested (q, p, P)
};

struct ResidualOptions {
  // A node is a kink when its slope jump exceeds kink_ratio times the jumps
  // three nodes away on both sides (plus kink_floor).
  double kink_ratio = 4.0;
  double kink_floor = 1e-6;
  std::size_t slope_samples = 11;
  // Additional (q, p, P) candidates tried at kink points.
  std::vector<std::array<double, 3>> extra_candidates;
};

// 1-D grids only. Test points are snapped to the nearest node; the time
// derivative is the forward difference to the next stored slice.
std::vector<ResidualPoint> viscosity_residuals(const ValueGrid& grid, const ProblemModel& model,
                                               const std::vector<std::array<double, 2>>& points,
                                               const ResidualOptions& options = {});

// Value-grid files, layouts in docs/formats.md.
void write_value_grid_csv(const ValueGrid& grid, const std::string& path);
void write_value_grid_binary(const ValueGrid& grid, const std::string& path);
ValueGrid read_value_grid_binary(const std::string& path);

}  // namespace rsc
