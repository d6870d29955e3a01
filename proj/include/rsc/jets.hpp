#pragma once

// Numerical membership tests for second-order spatial jets, right time jets
// and right parabolic jets, and the inclusion checks that tie them to the
// adjoint processes along an optimal trajectory.
//
// Membership is an o(.) statement; it is approximated by the normalized
// margin m(r) = max over the ball of radius r of the violation, divided by r^2
// (spatial, parabolic) or r (time), along a decreasing radius schedule.

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rsc/fixtures.hpp"
#include "rsc/hjb.hpp"
#include "rsc/model.hpp"

namespace rsc {

class ValueFunction {
 public:
  using Callable = std::function<double(double t, StateView x)>;

  static ValueFunction callable(Callable fn, std::size_t dim);
  // Copies the grid; values are interpolated linearly.
  static ValueFunction from_grid(const ValueGrid& grid);

  double operator()(double t, StateView x) const;
  double operator()(double t, double x) const { return (*this)(t, StateView(&x, 1)); }
  std::size_t dim() const { return dim_; }
  bool grid_backed() const { return grid_ != nullptr; }
  // Smallest usable radius: 1e-6 for callables, one cell for grids.
  double resolution() const;
  double time_resolution() const;
  // Below four cells a grid value cannot certify membership.
  double trusted_radius() const;
  double trusted_time_radius() const;

 private:
  Callable fn_;
  std::shared_ptr<const ValueGrid> grid_;
  std::size_t dim_ = 1;
};

enum class JetKind { x_super_2, x_sub_2, t_plus_super_1, t_plus_sub_1, parabolic_super, parabolic_sub };
enum class JetSide { super, sub };
enum class JetDecision { member, non_member, inconclusive };

std::string to_string(JetKind kind);
std::string to_string(JetDecision decision);

struct JetSchedule {
  std::vector<double> radii;  // strictly decreasing
  double tol_final = 1e-4;    // member: final margin at most this, nonincreasing tail
  double plateau = 1e-2;      // non_member: flat tail at or above this
};

// 0.2 * 2^-k, k = 0..11.
JetSchedule default_schedule();

struct JetWitness {
  double t = 0.0;
  std::vector<double> x;
  double radius = 0.0;
  double violation = 0.0;
};

struct JetVerdict {
  JetKind kind = JetKind::x_super_2;
  // (p, P row-major) for spatial jets, (q) for time jets, (q, p, P) for parabolic jets.
  std::vector<double> candidate;
  JetDecision decision = JetDecision::inconclusive;
  JetWitness witness;  // worst sample at the smallest radius
  std::vector<double> radii;
  std::vector<double> margin_curve;
  std::string reason;
};

// Precomputes value samples around (t_hat, x_hat) so many candidates can be
// tested cheaply. Throws std::invalid_argument for radii below the value's
// resolution, non-interior points or non-finite values.
class JetSampler {
 public:
  enum class Family { spatial, time, parabolic };

  JetSampler(const ValueFunction& value, Family family, double t_hat, StateView x_hat,
             JetSchedule schedule = default_schedule());

  // q ignored for spatial, p/P ignored for time jets.
  JetVerdict test(JetSide side, double q, std::span<const double> p,
                  std::span<const double> P) const;
  JetDecision decide(JetSide side, double q, std::span<const double> p,
                     std::span<const double> P) const;

  Family family() const { return family_; }

 private:
  struct Ring {
    double radius = 0.0;
    std::vector<double> dt, dx, dv;  // dx: n entries per sample
  };
  std::vector<double> margins(JetSide side, double q, std::span<const double> p,
                              std::span<const double> P) const;
  JetDecision classify(const std::vector<double>& m, std::string* reason) const;

  Family family_;
  std::size_t dim_ = 1;
  double t_hat_ = 0.0;
  std::vector<double> x_hat_;
  JetSchedule schedule_;
  std::vector<Ring> rings_;
  double noise_ = 0.0;
  bool untrusted_ = false;  // some radius below the trusted radius of a grid value
};

JetVerdict test_x_jet(const ValueFunction& value, double s, StateView x_hat,
                      std::span<const double> p, std::span<const double> P, JetSide side,
                      const JetSchedule& schedule = default_schedule());
JetVerdict test_t_jet(const ValueFunction& value, double s_hat, StateView x, double q,
                      JetSide side, const JetSchedule& schedule = default_schedule());
JetVerdict test_parabolic_jet(const ValueFunction& value, double s_hat, StateView x_hat,
                              double q, std::span<const double> p, std::span<const double> P,
                              JetSide side, const JetSchedule& schedule = default_schedule());

struct ScriptH1 {
  double value = 0.0;       // G(s, x, u, p, P) + <q - P sigma_bar, sigma>
  double first_form = 0.0;  // script-H(z = sigma_bar^T p) - (1/2) sigma_bar^T (P + mu p p^T) sigma_bar
};

// Throws std::logic_error if the two forms differ by more than 1e-10 (relative).
ScriptH1 script_H1(const ProblemModel& model, double s, StateView x, ControlView u,
                   std::span<const double> p, std::span<const double> q,
                   std::span<const double> P, std::span<const double> sigma_bar);

struct TheoremCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct TheoremReport {
  std::string theorem;  // "4.1", "4.2", "4.3"
  std::string fixture;
  bool passed = false;
  std::vector<TheoremCheck> checks;
  std::vector<JetVerdict> verdicts;   // inclusion and negative-control verdicts
  std::size_t candidates_tested = 0;  // sweep size
  std::size_t members_found = 0;
  std::size_t inconclusive = 0;
  std::vector<std::string> flags;     // reported, never failing
  std::vector<double> h1_values;      // script-H1 at each sampled s
};

struct TheoremOptions {
  std::vector<double> s_samples = {0.25, 0.5, 0.75};
  JetSchedule schedule = default_schedule();
  bool sweep = true;
};

TheoremReport verify_theorem_41(const ClosedFormExample& fixture, const TheoremOptions& options = {});
TheoremReport verify_theorem_42(const ClosedFormExample& fixture, const TheoremOptions& options = {});
TheoremReport verify_theorem_43(const ClosedFormExample& fixture, const TheoremOptions& options = {});

}  // namespace rsc
