#include "rsc/jets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rsc/adjoint.hpp"
#include "rsc/error.hpp"
#include "rsc/kernels.hpp"

namespace rsc {

namespace {

constexpr double kCallableResolution = 1e-6;
constexpr std::size_t kSpatialSamples1d = 401;
constexpr std::size_t kHaltonSamples = 2048;
constexpr std::size_t kTimeSamples = 400;
constexpr std::size_t kParabolicX = 41;
constexpr std::size_t kParabolicT = 21;
// Violations below this many ulps of |V| are rounding in dv, not remainder.
constexpr double kNoiseUlps = 64.0;

double radical_inverse(std::size_t i, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

unsigned nth_prime(std::size_t k) {
  static const unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (k >= std::size(primes)) throw std::invalid_argument("jet sampling supports at most 16 dimensions");
  return primes[k];
}

// Unit-ball directions: the axes, then a Halton set of the cube kept inside the ball.
std::vector<double> ball_points(std::size_t n) {
  std::vector<double> pts;
  pts.resize(n, 0.0);  // centre
  for (std::size_t d = 0; d < n; ++d) {
    for (double sgn : {-1.0, 1.0}) {
      std::vector<double> e(n, 0.0);
      e[d] = sgn;
      pts.insert(pts.end(), e.begin(), e.end());
    }
  }
  std::vector<double> y(n);
  for (std::size_t i = 1; i <= kHaltonSamples; ++i) {
    double r2 = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      y[d] = 2.0 * radical_inverse(i, nth_prime(d)) - 1.0;
      r2 += y[d] * y[d];
    }
    if (r2 <= 1.0) pts.insert(pts.end(), y.begin(), y.end());
  }
  return pts;
}

double scale_for(JetSampler::Family family, double r) {
  return family == JetSampler::Family::time ? r : r * r;
}

}  // namespace

ValueFunction ValueFunction::callable(Callable fn, std::size_t dim) {
  if (!fn) throw std::invalid_argument("value callable is empty");
  if (dim == 0) throw std::invalid_argument("value dimension must be positive");
  ValueFunction v;
  v.fn_ = std::move(fn);
  v.dim_ = dim;
  return v;
}

ValueFunction ValueFunction::from_grid(const ValueGrid& grid) {
  if (grid.dim() == 0 || grid.t_nodes.size() < 2) throw std::invalid_argument("value grid is empty");
  ValueFunction v;
  v.grid_ = std::make_shared<const ValueGrid>(grid);
  v.dim_ = grid.dim();
  return v;
}

double ValueFunction::operator()(double t, StateView x) const {
  return grid_ ? grid_->interpolate(t, x) : fn_(t, x);
}

double ValueFunction::resolution() const {
  if (!grid_) return kCallableResolution;
  double h = 0.0;
  for (const auto& axis : grid_->axes) {
    for (std::size_t i = 1; i < axis.size(); ++i) h = std::max(h, axis[i] - axis[i - 1]);
  }
  return h;
}

double ValueFunction::time_resolution() const {
  if (!grid_) return kCallableResolution;
  double h = 0.0;
  for (std::size_t i = 1; i < grid_->t_nodes.size(); ++i) {
    h = std::max(h, grid_->t_nodes[i] - grid_->t_nodes[i - 1]);
  }
  return h;
}

double ValueFunction::trusted_radius() const {
  return grid_ ? 4.0 * resolution() : kCallableResolution;
}

double ValueFunction::trusted_time_radius() const {
  return grid_ ? 4.0 * time_resolution() : kCallableResolution;
}

std::string to_string(JetKind kind) {
  switch (kind) {
    case JetKind::x_super_2: return "x_super_2";
    case JetKind::x_sub_2: return "x_sub_2";
    case JetKind::t_plus_super_1: return "t_plus_super_1";
    case JetKind::t_plus_sub_1: return "t_plus_sub_1";
    case JetKind::parabolic_super: return "parabolic_super";
    case JetKind::parabolic_sub: return "parabolic_sub";
  }
  return "unknown";
}

std::string to_string(JetDecision decision) {
  switch (decision) {
    case JetDecision::member: return "member";
    case JetDecision::non_member: return "non_member";
    case JetDecision::inconclusive: return "inconclusive";
  }
  return "unknown";
}

JetSchedule default_schedule() {
  JetSchedule s;
  for (int k = 0; k <= 11; ++k) s.radii.push_back(0.2 * std::ldexp(1.0, -k));
  return s;
}

JetSampler::JetSampler(const ValueFunction& value, Family family, double t_hat, StateView x_hat,
                       JetSchedule schedule)
    : family_(family), dim_(value.dim()), t_hat_(t_hat), x_hat_(x_hat.begin(), x_hat.end()),
      schedule_(std::move(schedule)) {
  if (x_hat.size() != dim_) throw std::invalid_argument("jet point has the wrong dimension");
  if (schedule_.radii.size() < 3) throw std::invalid_argument("jet schedule needs at least 3 radii");
  for (std::size_t k = 0; k < schedule_.radii.size(); ++k) {
    const double r = schedule_.radii[k];
    if (!(r > 0.0) || (k > 0 && r >= schedule_.radii[k - 1])) {
      throw std::invalid_argument("jet radii must be positive and strictly decreasing");
    }
    const bool x_used = family_ != Family::time;
    const bool t_used = family_ != Family::spatial;
    const double t_radius = family_ == Family::time ? r : r * r;
    if (x_used && r < value.resolution()) {
      throw std::invalid_argument("jet radius below the spatial resolution of the value");
    }
    if (family_ == Family::time && t_radius < value.time_resolution()) {
      throw std::invalid_argument("jet radius below the time resolution of the value");
    }
    if ((x_used && r < value.trusted_radius()) ||
        (t_used && value.grid_backed() && t_radius < value.trusted_time_radius())) {
      untrusted_ = true;
    }
  }

  const double v0 = value(t_hat_, StateView(x_hat_));
  if (!std::isfinite(v0)) throw std::invalid_argument("value is not finite at the jet point");
  noise_ = kNoiseUlps * std::numeric_limits<double>::epsilon() * (1.0 + std::fabs(v0));

  std::vector<double> unit;
  if (family_ == Family::spatial && dim_ > 1) unit = ball_points(dim_);

  std::vector<double> x(dim_);
  rings_.reserve(schedule_.radii.size());
  for (double r : schedule_.radii) {
    Ring ring;
    ring.radius = r;
    auto add = [&](double dt, const double* dx) {
      for (std::size_t d = 0; d < dim_; ++d) x[d] = x_hat_[d] + dx[d];
      const double v = value(t_hat_ + dt, StateView(x));
      if (!std::isfinite(v)) throw std::invalid_argument("value is not finite near the jet point");
      ring.dt.push_back(dt);
      ring.dx.insert(ring.dx.end(), dx, dx + dim_);
      ring.dv.push_back(v - v0);
    };
    std::vector<double> dx(dim_, 0.0);
    switch (family_) {
      case Family::spatial:
        if (dim_ == 1) {
          for (std::size_t i = 0; i < kSpatialSamples1d; ++i) {
            dx[0] = r * (-1.0 + 2.0 * static_cast<double>(i) / (kSpatialSamples1d - 1));
            add(0.0, dx.data());
          }
        } else {
          for (std::size_t i = 0; i < unit.size() / dim_; ++i) {
            for (std::size_t d = 0; d < dim_; ++d) dx[d] = r * unit[i * dim_ + d];
            add(0.0, dx.data());
          }
        }
        break;
      case Family::time:
        for (std::size_t i = 1; i <= kTimeSamples; ++i) {
          add(r * static_cast<double>(i) / kTimeSamples, dx.data());
        }
        break;
      case Family::parabolic:
        // Samples along each axis; mixed directions are covered in 1-D only.
        for (std::size_t j = 0; j < kParabolicT; ++j) {
          const double dt = r * r * static_cast<double>(j) / (kParabolicT - 1);
          for (std::size_t d = 0; d < dim_; ++d) {
            for (std::size_t i = 0; i < kParabolicX; ++i) {
              std::fill(dx.begin(), dx.end(), 0.0);
              dx[d] = r * (-1.0 + 2.0 * static_cast<double>(i) / (kParabolicX - 1));
              add(dt, dx.data());
            }
          }
        }
        break;
    }
    rings_.push_back(std::move(ring));
  }
}

std::vector<double> JetSampler::margins(JetSide side, double q, std::span<const double> p,
                                        std::span<const double> P) const {
  const double sign = side == JetSide::super ? 1.0 : -1.0;
  const auto& kt = kernels::active();
  std::vector<double> m;
  m.reserve(rings_.size());
  for (const Ring& ring : rings_) {
    const std::size_t ns = ring.dv.size();
    double worst;
    if (family_ == Family::time) {
      worst = kt.max_taylor_excess(ring.dv.data(), nullptr, ring.dt.data(), ns, 0.0, q, 0.0, sign);
    } else if (dim_ == 1) {
      const double* dt = family_ == Family::parabolic ? ring.dt.data() : nullptr;
      worst = kt.max_taylor_excess(ring.dv.data(), dt, ring.dx.data(), ns, q, p[0], 0.5 * P[0], sign);
    } else {
      worst = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < ns; ++i) {
        const double* dx = ring.dx.data() + i * dim_;
        double lin = 0.0, quad = 0.0;
        for (std::size_t a = 0; a < dim_; ++a) {
          lin += p[a] * dx[a];
          for (std::size_t b = 0; b < dim_; ++b) quad += dx[a] * P[a * dim_ + b] * dx[b];
        }
        const double e = sign * (ring.dv[i] - q * ring.dt[i] - lin - 0.5 * quad);
        worst = std::max(worst, e);
      }
    }
    m.push_back(std::max(worst - noise_, 0.0) / scale_for(family_, ring.radius));
  }
  return m;
}

JetDecision JetSampler::classify(const std::vector<double>& m, std::string* reason) const {
  const std::size_t k = m.size();
  const double last = m[k - 1], prev = m[k - 2], prev2 = m[k - 3];
  auto le = [](double a, double b) { return a <= b + 1e-12 * std::fabs(b) + 1e-15; };
  std::ostringstream why;
  if (last <= schedule_.tol_final && le(last, prev) && le(prev, prev2)) {
    if (untrusted_) {
      if (reason) *reason = "margin decays but radii fall below four grid cells";
      return JetDecision::inconclusive;
    }
    why << "margin " << last << " <= " << schedule_.tol_final << " and nonincreasing";
    if (reason) *reason = why.str();
    return JetDecision::member;
  }
  const double ratio = prev > 0.0 ? last / prev : (last > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  if ((ratio >= 0.9 && last >= schedule_.plateau) || (ratio >= 1.5 && last > schedule_.tol_final)) {
    why << "margin " << last << " does not decay (tail ratio " << ratio << ")";
    if (reason) *reason = why.str();
    return JetDecision::non_member;
  }
  why << "margin " << last << " with tail ratio " << ratio << " is undecided";
  if (reason) *reason = why.str();
  return JetDecision::inconclusive;
}

JetDecision JetSampler::decide(JetSide side, double q, std::span<const double> p,
                               std::span<const double> P) const {
  return classify(margins(side, q, p, P), nullptr);
}

JetVerdict JetSampler::test(JetSide side, double q, std::span<const double> p,
                            std::span<const double> P) const {
  JetVerdict v;
  const bool sup = side == JetSide::super;
  switch (family_) {
    case Family::spatial: v.kind = sup ? JetKind::x_super_2 : JetKind::x_sub_2; break;
    case Family::time: v.kind = sup ? JetKind::t_plus_super_1 : JetKind::t_plus_sub_1; break;
    case Family::parabolic: v.kind = sup ? JetKind::parabolic_super : JetKind::parabolic_sub; break;
  }
  if (family_ != Family::spatial) v.candidate.push_back(q);
  if (family_ != Family::time) {
    v.candidate.insert(v.candidate.end(), p.begin(), p.end());
    v.candidate.insert(v.candidate.end(), P.begin(), P.end());
  }
  v.radii = schedule_.radii;
  v.margin_curve = margins(side, q, p, P);
  v.decision = classify(v.margin_curve, &v.reason);

  // Witness: the worst sample on the smallest ring.
  const Ring& ring = rings_.back();
  const double sign = sup ? 1.0 : -1.0;
  double worst = -std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < ring.dv.size(); ++i) {
    const double* dx = ring.dx.data() + i * dim_;
    double e = ring.dv[i];
    if (family_ == Family::time) {
      e -= q * ring.dt[i];
    } else {
      e -= q * ring.dt[i];
      for (std::size_t a = 0; a < dim_; ++a) {
        e -= p[a] * dx[a];
        for (std::size_t b = 0; b < dim_; ++b) e -= 0.5 * dx[a] * P[a * dim_ + b] * dx[b];
      }
    }
    e *= sign;
    if (e > worst) {
      worst = e;
      arg = i;
    }
  }
  v.witness.t = t_hat_ + ring.dt[arg];
  v.witness.x.resize(dim_);
  for (std::size_t a = 0; a < dim_; ++a) v.witness.x[a] = x_hat_[a] + ring.dx[arg * dim_ + a];
  v.witness.radius = ring.radius;
  v.witness.violation = worst;
  return v;
}

namespace {

void check_jet_shapes(std::size_t n, std::span<const double> p, std::span<const double> P) {
  if (p.size() != n || P.size() != n * n) throw std::invalid_argument("jet candidate has the wrong shape");
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (std::fabs(P[a * n + b] - P[b * n + a]) > 1e-12) {
        throw std::invalid_argument("jet candidate P is not symmetric");
      }
    }
  }
}

}  // namespace

JetVerdict test_x_jet(const ValueFunction& value, double s, StateView x_hat,
                      std::span<const double> p, std::span<const double> P, JetSide side,
                      const JetSchedule& schedule) {
  check_jet_shapes(value.dim(), p, P);
  JetSampler sampler(value, JetSampler::Family::spatial, s, x_hat, schedule);
  return sampler.test(side, 0.0, p, P);
}

JetVerdict test_t_jet(const ValueFunction& value, double s_hat, StateView x, double q,
                      JetSide side, const JetSchedule& schedule) {
  JetSampler sampler(value, JetSampler::Family::time, s_hat, x, schedule);
  return sampler.test(side, q, {}, {});
}

JetVerdict test_parabolic_jet(const ValueFunction& value, double s_hat, StateView x_hat,
                              double q, std::span<const double> p, std::span<const double> P,
                              JetSide side, const JetSchedule& schedule) {
  check_jet_shapes(value.dim(), p, P);
  JetSampler sampler(value, JetSampler::Family::parabolic, s_hat, x_hat, schedule);
  return sampler.test(side, q, p, P);
}

ScriptH1 script_H1(const ProblemModel& model, double s, StateView x, ControlView u,
                   std::span<const double> p, std::span<const double> q,
                   std::span<const double> P, std::span<const double> sigma_bar) {
  const std::size_t n = model.state_dim();
  if (p.size() != n || q.size() != n || P.size() != n * n || sigma_bar.size() != n) {
    throw std::invalid_argument("script_H1 arguments have the wrong shape");
  }
  std::vector<double> sig(n);
  model.diffusion(s, x, u, sig);
  double inner = 0.0, z = 0.0, quad = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    double Psb = 0.0;
    for (std::size_t b = 0; b < n; ++b) Psb += P[a * n + b] * sigma_bar[b];
    inner += (q[a] - Psb) * sig[a];
    z += sigma_bar[a] * p[a];
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      quad += sigma_bar[a] * (P[a * n + b] + model.risk() * p[a] * p[b]) * sigma_bar[b];
    }
  }
  ScriptH1 out;
  out.value = hamiltonian_G(model, s, x, u, p, P) + inner;
  out.first_form = hamiltonian_script_H(model, s, x, z, u, p, q, P, sigma_bar) - 0.5 * quad;
  if (std::fabs(out.value - out.first_form) > 1e-10 * std::max(1.0, std::fabs(out.value))) {
    std::ostringstream os;
    os << "script_H1 forms disagree: " << out.value << " vs " << out.first_form;
    throw std::logic_error(os.str());
  }
  return out;
}

namespace {

struct TrajectoryPoint {
  double s = 0.0;
  double x = 0.0;
  double p = 0.0, q = 0.0, P = 0.0, Q = 0.0;
  double h1 = 0.0;
};

TrajectoryPoint trajectory_point(const ClosedFormExample& fx, double s) {
  const ProblemModel& model = fx.model;
  if (model.state_dim() != 1) throw ModelError("theorem checks need a one-dimensional fixture");
  TrajectoryPoint tp;
  tp.s = s;
  tp.x = fx.optimal_state(s);
  const auto pq = fx.adjoint_first(s);
  const auto PQ = fx.adjoint_second(s);
  tp.p = pq[0];
  tp.q = pq[1];
  tp.P = PQ[0];
  tp.Q = PQ[1];
  const ControlView u = model.controls()[fx.optimal_control(s, tp.x)];
  double sigma_bar = 0.0;
  model.diffusion(s, StateView(&tp.x, 1), u, std::span<double>(&sigma_bar, 1));
  tp.h1 = script_H1(model, s, StateView(&tp.x, 1), u, std::span<const double>(&tp.p, 1),
                    std::span<const double>(&tp.q, 1), std::span<const double>(&tp.P, 1),
                    std::span<const double>(&sigma_bar, 1))
              .value;
  return tp;
}

ValueFunction fixture_value(const ClosedFormExample& fx) {
  auto fn = fx.value_fn;
  return ValueFunction::callable([fn](double t, StateView x) { return fn(t, x[0]); }, 1);
}

std::string at_s(double s) {
  std::ostringstream os;
  os << "s=" << s;
  return os.str();
}

void add_check(TheoremReport& rep, std::string name, bool passed, std::string detail) {
  rep.checks.push_back({std::move(name), passed, std::move(detail)});
}

double one_sided_derivative(const ClosedFormExample& fx, double s, double x, double h) {
  return (fx.value_fn(s, x + h) - fx.value_fn(s, x)) / h;
}

void finish(TheoremReport& rep) {
  rep.passed = !rep.checks.empty() &&
               std::all_of(rep.checks.begin(), rep.checks.end(), [](const TheoremCheck& c) { return c.passed; });
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / (n - 1);
  v[n / 2] = 0.5 * (lo + hi);  // exact centre for odd n
  return v;
}

}  // namespace

TheoremReport verify_theorem_41(const ClosedFormExample& fx, const TheoremOptions& opt) {
  TheoremReport rep;
  rep.theorem = "4.1";
  rep.fixture = fx.id;
  const ValueFunction value = fixture_value(fx);

  for (double s : opt.s_samples) {
    const TrajectoryPoint tp = trajectory_point(fx, s);
    rep.h1_values.push_back(tp.h1);
    JetSampler sampler(value, JetSampler::Family::spatial, s, StateView(&tp.x, 1), opt.schedule);
    const double p1[1] = {tp.p};

    bool super_ok = true;
    std::ostringstream sd;
    for (double delta : {0.0, 0.1, 1.0, 1e3}) {
      const double P1[1] = {tp.P + delta};
      JetVerdict v = sampler.test(JetSide::super, 0.0, p1, P1);
      if (v.decision != JetDecision::member) {
        super_ok = false;
        sd << "(p, P+" << delta << ") " << to_string(v.decision) << "; ";
      }
      rep.verdicts.push_back(std::move(v));
    }
    add_check(rep, "superjet_contains_adjoint_ray " + at_s(s), super_ok,
              super_ok ? "(p, P + delta) accepted for delta in {0, 0.1, 1, 1000}" : sd.str());

    {
      const double p_bad[1] = {tp.p + 0.05};
      const double P1[1] = {tp.P};
      JetVerdict v = sampler.test(JetSide::super, 0.0, p_bad, P1);
      const bool ok = v.decision == JetDecision::non_member;
      add_check(rep, "negative_control " + at_s(s), ok, "(p + 0.05, P) as superjet: " + to_string(v.decision));
      rep.verdicts.push_back(std::move(v));
    }

    if (opt.sweep) {
      const auto ps = linspace(tp.p - 0.5, tp.p + 0.5, 81);
      const auto Ps = linspace(tp.P - 2.0, tp.P + 2.0, 161);
      std::size_t bad = 0, members = 0;
      std::ostringstream worst;
      for (double pc : ps) {
        for (double Pc : Ps) {
          const JetDecision d = sampler.decide(JetSide::sub, 0.0, std::span<const double>(&pc, 1),
                                               std::span<const double>(&Pc, 1));
          ++rep.candidates_tested;
          if (d == JetDecision::inconclusive) ++rep.inconclusive;
          if (d != JetDecision::member) continue;
          ++members;
          if (std::fabs(pc - tp.p) > 1e-6 || Pc > tp.P + 1e-6) {
            if (bad++ == 0) worst << "member (" << pc << ", " << Pc << ") outside {p} x (-inf, P]";
          }
        }
      }
      rep.members_found += members;
      std::ostringstream d;
      d << members << " subjet members of " << ps.size() * Ps.size();
      if (bad) d << "; " << worst.str();
      add_check(rep, "subjet_inside_adjoint_set " + at_s(s), bad == 0, d.str());
    }

    // Printed p-interval of the superjet against numeric one-sided derivatives.
    if (fx.jet_sets.p_super) {
      const Interval printed = fx.jet_sets.p_super(s);
      const double h = 1e-6;
      const double right = one_sided_derivative(fx, s, tp.x, h);
      const double left = one_sided_derivative(fx, s, tp.x, -h);
      const double lo = std::min(left, right), hi = std::max(left, right);
      if (!printed.empty && (std::fabs(printed.lo - lo) > 1e-3 || std::fabs(printed.hi - hi) > 1e-3)) {
        std::ostringstream f;
        f << at_s(s) << ": printed superjet p-interval [" << printed.lo << ", " << printed.hi
          << "] differs from one-sided derivatives [" << lo << ", " << hi << "]";
        rep.flags.push_back(f.str());
      }
    }
  }
  finish(rep);
  return rep;
}

TheoremReport verify_theorem_42(const ClosedFormExample& fx, const TheoremOptions& opt) {
  TheoremReport rep;
  rep.theorem = "4.2";
  rep.fixture = fx.id;
  const ValueFunction value = fixture_value(fx);

  for (double s : opt.s_samples) {
    const TrajectoryPoint tp = trajectory_point(fx, s);
    rep.h1_values.push_back(tp.h1);
    JetSampler sampler(value, JetSampler::Family::time, s, StateView(&tp.x, 1), opt.schedule);
    const double q0 = -tp.h1;

    bool super_ok = true;
    std::ostringstream sd;
    for (double delta : {0.0, 0.1, 1.0}) {
      JetVerdict v = sampler.test(JetSide::super, q0 + delta, {}, {});
      if (v.decision != JetDecision::member) {
        super_ok = false;
        sd << "-H1+" << delta << " " << to_string(v.decision) << "; ";
      }
      rep.verdicts.push_back(std::move(v));
    }
    add_check(rep, "time_superjet_contains_ray " + at_s(s), super_ok,
              super_ok ? "-H1 + delta accepted for delta in {0, 0.1, 1}" : sd.str());

    {
      JetVerdict v = sampler.test(JetSide::sub, q0 + 0.1, {}, {});
      const bool ok = v.decision == JetDecision::non_member;
      add_check(rep, "negative_control " + at_s(s), ok, "-H1 + 0.1 as time subjet: " + to_string(v.decision));
      rep.verdicts.push_back(std::move(v));
    }

    if (opt.sweep) {
      std::size_t bad = 0, members = 0;
      std::ostringstream worst;
      for (double qc : linspace(q0 - 1.0, q0 + 1.0, 201)) {
        const JetDecision d = sampler.decide(JetSide::sub, qc, {}, {});
        ++rep.candidates_tested;
        if (d == JetDecision::inconclusive) ++rep.inconclusive;
        if (d != JetDecision::member) continue;
        ++members;
        if (qc > q0 + 1e-6 && bad++ == 0) worst << "member " << qc << " above -H1 = " << q0;
      }
      rep.members_found += members;
      std::ostringstream d;
      d << members << " time-subjet members of 201";
      if (bad) d << "; " << worst.str();
      add_check(rep, "time_subjet_below_minus_H1 " + at_s(s), bad == 0, d.str());
    }
  }
  finish(rep);
  return rep;
}

TheoremReport verify_theorem_43(const ClosedFormExample& fx, const TheoremOptions& opt) {
  TheoremReport rep;
  rep.theorem = "4.3";
  rep.fixture = fx.id;
  const ValueFunction value = fixture_value(fx);

  for (double s : opt.s_samples) {
    const TrajectoryPoint tp = trajectory_point(fx, s);
    rep.h1_values.push_back(tp.h1);
    JetSampler sampler(value, JetSampler::Family::parabolic, s, StateView(&tp.x, 1), opt.schedule);
    const double q0 = -tp.h1;
    const double p1[1] = {tp.p};

    bool super_ok = true;
    std::ostringstream sd;
    for (double d1 : {0.0, 0.1}) {
      for (double d2 : {0.0, 0.1}) {
        const double P1[1] = {tp.P + d2};
        JetVerdict v = sampler.test(JetSide::super, q0 + d1, p1, P1);
        if (v.decision != JetDecision::member) {
          super_ok = false;
          sd << "(-H1+" << d1 << ", p, P+" << d2 << ") " << to_string(v.decision) << "; ";
        }
        rep.verdicts.push_back(std::move(v));
      }
    }
    add_check(rep, "parabolic_superjet_contains_set " + at_s(s), super_ok,
              super_ok ? "(-H1 + d1, p, P + d2) accepted for d1, d2 in {0, 0.1}" : sd.str());

    {
      const double p_bad[1] = {tp.p + 0.05};
      const double P1[1] = {tp.P};
      JetVerdict v = sampler.test(JetSide::super, q0, p_bad, P1);
      const bool ok = v.decision == JetDecision::non_member;
      add_check(rep, "negative_control " + at_s(s), ok,
                "(-H1, p + 0.05, P) as parabolic superjet: " + to_string(v.decision));
      rep.verdicts.push_back(std::move(v));
    }

    if (opt.sweep) {
      const auto qs = linspace(q0 - 1.0, q0 + 1.0, 11);
      const auto ps = linspace(tp.p - 0.5, tp.p + 0.5, 21);
      const auto Ps = linspace(tp.P - 2.0, tp.P + 2.0, 41);
      std::size_t bad = 0, members = 0;
      std::ostringstream worst;
      for (double qc : qs) {
        for (double pc : ps) {
          for (double Pc : Ps) {
            const JetDecision d = sampler.decide(JetSide::sub, qc, std::span<const double>(&pc, 1),
                                                 std::span<const double>(&Pc, 1));
            ++rep.candidates_tested;
            if (d == JetDecision::inconclusive) ++rep.inconclusive;
            if (d != JetDecision::member) continue;
            ++members;
            if (qc > q0 + 1e-6 || std::fabs(pc - tp.p) > 1e-6 || Pc > tp.P + 1e-6) {
              if (bad++ == 0) worst << "member (" << qc << ", " << pc << ", " << Pc << ") outside the set";
            }
          }
        }
      }
      rep.members_found += members;
      std::ostringstream d;
      d << members << " parabolic subjet members of " << qs.size() * ps.size() * Ps.size();
      if (bad) d << "; " << worst.str();
      add_check(rep, "parabolic_subjet_inside_set " + at_s(s), bad == 0, d.str());
    }
  }
  finish(rep);
  return rep;
}

}  // namespace rsc
