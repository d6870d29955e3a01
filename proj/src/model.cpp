#include "rsc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rsc/error.hpp"

namespace rsc {

Box Box::cube(std::size_t dim, double lo, double hi) {
  return Box{std::vector<double>(dim, lo), std::vector<double>(dim, hi)};
}

bool Box::contains(StateView x, double margin) const {
  if (x.size() != lower.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] < lower[i] + margin || x[i] > upper[i] - margin) return false;
  }
  return true;
}

ControlSet::ControlSet(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw ModelError("control set U must be nonempty");
  dim_ = points.front().size();
  if (dim_ == 0) throw ModelError("control points must have dimension >= 1");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != dim_) throw ModelError("control points have inconsistent dimension");
    for (double v : points[i]) {
      if (!std::isfinite(v)) throw ModelError("control points must be finite");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (points[i] == points[j]) {
        throw ModelError("duplicate control point at index " + std::to_string(i));
      }
    }
  }
  count_ = points.size();
  points_.reserve(count_ * dim_);
  for (const auto& p : points) points_.insert(points_.end(), p.begin(), p.end());
}

std::vector<std::vector<double>> ControlSet::points() const {
  std::vector<std::vector<double>> out(count_);
  for (std::size_t i = 0; i < count_; ++i) {
    out[i].assign(points_.begin() + i * dim_, points_.begin() + (i + 1) * dim_);
  }
  return out;
}

std::vector<std::string> ModelDerivatives::missing() const {
  std::vector<std::string> names;
  if (!drift_jacobian) names.emplace_back("drift_jacobian");
  if (!diffusion_jacobian) names.emplace_back("diffusion_jacobian");
  if (!running_cost_gradient) names.emplace_back("running_cost_gradient");
  if (!terminal_cost_gradient) names.emplace_back("terminal_cost_gradient");
  if (!drift_hessian_contraction) names.emplace_back("drift_hessian_contraction");
  if (!diffusion_hessian_contraction) names.emplace_back("diffusion_hessian_contraction");
  if (!running_cost_hessian) names.emplace_back("running_cost_hessian");
  if (!terminal_cost_hessian) names.emplace_back("terminal_cost_hessian");
  return names;
}

ProblemModel::ProblemModel(ModelSpec spec) : spec_(std::move(spec)) {
  if (spec_.state_dim == 0) throw ModelError("state dimension must be >= 1");
  if (!spec_.drift || !spec_.diffusion || !spec_.running_cost || !spec_.terminal_cost) {
    throw ModelError("model '" + spec_.name + "' is missing a coefficient function");
  }
  if (!(spec_.risk > 0.0) || !std::isfinite(spec_.risk)) {
    throw ModelError("risk parameter mu must be > 0, got " + std::to_string(spec_.risk));
  }
  if (!(spec_.horizon.start >= 0.0) || !(spec_.horizon.start < spec_.horizon.end)) {
    throw ModelError("horizon must satisfy 0 <= t0 < T");
  }
  controls_ = ControlSet(spec_.controls);
  if (!spec_.domain) spec_.domain = Box::cube(spec_.state_dim, -6.0, 6.0);
  const Box& box = *spec_.domain;
  if (box.lower.size() != spec_.state_dim || box.upper.size() != spec_.state_dim) {
    throw ModelError("domain box dimension does not match state dimension");
  }
  for (std::size_t i = 0; i < spec_.state_dim; ++i) {
    if (!(box.lower[i] < box.upper[i])) throw ModelError("domain box must have lower < upper");
  }
}

ProblemModel ProblemModel::with_risk(double mu) const {
  ModelSpec s = spec_;
  s.risk = mu;
  return ProblemModel(std::move(s));
}

ProblemModel ProblemModel::with_controls(const std::vector<std::vector<double>>& controls) const {
  ModelSpec s = spec_;
  s.controls = controls;
  return ProblemModel(std::move(s));
}

ProblemModel ProblemModel::with_costs(ScalarCoefficient running, TerminalFunction terminal) const {
  ModelSpec s = spec_;
  s.running_cost = std::move(running);
  s.terminal_cost = std::move(terminal);
  // Analytic cost derivatives no longer describe the new costs.
  s.derivatives.running_cost_gradient = nullptr;
  s.derivatives.running_cost_hessian = nullptr;
  s.derivatives.terminal_cost_gradient = nullptr;
  s.derivatives.terminal_cost_hessian = nullptr;
  s.bounds.running_cost_sup.reset();
  s.bounds.terminal_cost_sup.reset();
  s.bounds.cost_lipschitz.reset();
  return ProblemModel(std::move(s));
}

ProblemModel ProblemModel::with_horizon(Horizon horizon) const {
  ModelSpec s = spec_;
  s.horizon = horizon;
  return ProblemModel(std::move(s));
}

ProblemModel ProblemModel::with_domain(Box domain) const {
  ModelSpec s = spec_;
  s.domain = std::move(domain);
  return ProblemModel(std::move(s));
}

ProblemModel ProblemModel::with_bounds(DeclaredBounds bounds) const {
  ModelSpec s = spec_;
  s.bounds = bounds;
  return ProblemModel(std::move(s));
}

namespace {

constexpr double kFirstStep = 1e-5;
constexpr double kSecondStep = 1e-3;

using ScalarOfState = std::function<double(StateView)>;
using VectorOfState = std::function<void(StateView, std::span<double>)>;

// Central difference with one Richardson extrapolation, column j of a Jacobian.
void jacobian_fd(const VectorOfState& g, std::size_t out_dim, StateView x, std::span<double> out) {
  const std::size_t n = x.size();
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> plus(out_dim), minus(out_dim), coarse(out_dim);
  for (std::size_t j = 0; j < n; ++j) {
    for (int level = 0; level < 2; ++level) {
      const double h = level == 0 ? kFirstStep : 0.5 * kFirstStep;
      xp[j] = x[j] + h;
      g(xp, plus);
      xp[j] = x[j] - h;
      g(xp, minus);
      xp[j] = x[j];
      for (std::size_t i = 0; i < out_dim; ++i) {
        const double d = (plus[i] - minus[i]) / (2.0 * h);
        if (level == 0) {
          coarse[i] = d;
        } else {
          out[i * n + j] = (4.0 * d - coarse[i]) / 3.0;
        }
      }
    }
  }
}

void gradient_fd(const ScalarOfState& g, StateView x, std::span<double> out) {
  jacobian_fd([&](StateView y, std::span<double> o) { o[0] = g(y); }, 1, x, out);
}

void hessian_fd_at(const ScalarOfState& g, StateView x, double h, std::span<double> out) {
  const std::size_t n = x.size();
  std::vector<double> y(x.begin(), x.end());
  const double g0 = g(x);
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = x[j] + h;
    const double gp = g(y);
    y[j] = x[j] - h;
    const double gm = g(y);
    y[j] = x[j];
    out[j * n + j] = (gp - 2.0 * g0 + gm) / (h * h);
    for (std::size_t k = j + 1; k < n; ++k) {
      y[j] = x[j] + h;
      y[k] = x[k] + h;
      const double gpp = g(y);
      y[k] = x[k] - h;
      const double gpm = g(y);
      y[j] = x[j] - h;
      const double gmm = g(y);
      y[k] = x[k] + h;
      const double gmp = g(y);
      y[j] = x[j];
      y[k] = x[k];
      const double v = (gpp - gpm - gmp + gmm) / (4.0 * h * h);
      out[j * n + k] = v;
      out[k * n + j] = v;
    }
  }
}

void hessian_fd(const ScalarOfState& g, StateView x, std::span<double> out) {
  const std::size_t n = x.size();
  std::vector<double> coarse(n * n);
  hessian_fd_at(g, x, kSecondStep, coarse);
  hessian_fd_at(g, x, 0.5 * kSecondStep, out);
  for (std::size_t i = 0; i < n * n; ++i) out[i] = (4.0 * out[i] - coarse[i]) / 3.0;
}

}  // namespace

ModelDerivatives derivatives_with_fallback(const ProblemModel& model) {
  ModelDerivatives d = model.derivatives();
  const std::size_t n = model.state_dim();
  // Copies keep the callbacks valid independently of `model`'s lifetime.
  const ModelSpec spec = model.spec();

  if (!d.drift_jacobian) {
    d.drift_jacobian = [spec, n](double s, StateView x, ControlView u, std::span<double> out) {
      jacobian_fd([&](StateView y, std::span<double> o) { spec.drift(s, y, u, o); }, n, x, out);
    };
  }
  if (!d.diffusion_jacobian) {
    d.diffusion_jacobian = [spec, n](double s, StateView x, ControlView u, std::span<double> out) {
      jacobian_fd([&](StateView y, std::span<double> o) { spec.diffusion(s, y, u, o); }, n, x,
                  out);
    };
  }
  if (!d.running_cost_gradient) {
    d.running_cost_gradient = [spec](double s, StateView x, ControlView u, std::span<double> out) {
      gradient_fd([&](StateView y) { return spec.running_cost(s, y, u); }, x, out);
    };
  }
  if (!d.terminal_cost_gradient) {
    d.terminal_cost_gradient = [spec](StateView x, std::span<double> out) {
      gradient_fd([&](StateView y) { return spec.terminal_cost(y); }, x, out);
    };
  }
  if (!d.drift_hessian_contraction) {
    d.drift_hessian_contraction = [spec, n](double s, StateView x, ControlView u, StateView w,
                                            std::span<double> out) {
      std::vector<double> buf(n);
      hessian_fd(
          [&](StateView y) {
            spec.drift(s, y, u, buf);
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += w[i] * buf[i];
            return acc;
          },
          x, out);
    };
  }
  if (!d.diffusion_hessian_contraction) {
    d.diffusion_hessian_contraction = [spec, n](double s, StateView x, ControlView u, StateView w,
                                                std::span<double> out) {
      std::vector<double> buf(n);
      hessian_fd(
          [&](StateView y) {
            spec.diffusion(s, y, u, buf);
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += w[i] * buf[i];
            return acc;
          },
          x, out);
    };
  }
  if (!d.running_cost_hessian) {
    d.running_cost_hessian = [spec](double s, StateView x, ControlView u, std::span<double> out) {
      hessian_fd([&](StateView y) { return spec.running_cost(s, y, u); }, x, out);
    };
  }
  if (!d.terminal_cost_hessian) {
    d.terminal_cost_hessian = [spec](StateView x, std::span<double> out) {
      hessian_fd([&](StateView y) { return spec.terminal_cost(y); }, x, out);
    };
  }
  return d;
}

std::string to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass:
      return "pass";
    case CheckStatus::fail:
      return "fail";
    case CheckStatus::skipped:
      return "skipped";
  }
  return "unknown";
}

const AssumptionCheck& AssumptionReport::at(const std::string& name) const {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no assumption check named " + name);
}

bool AssumptionReport::all_passed() const {
  return std::none_of(checks.begin(), checks.end(),
                      [](const AssumptionCheck& c) { return c.status == CheckStatus::fail; });
}

namespace {

double norm2(std::span<const double> v) {
  double acc = 0.0;
  for (double e : v) acc += e * e;
  return std::sqrt(acc);
}

double distance(std::span<const double> a, std::span<const double> b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

}  // namespace

AssumptionReport validate_assumptions(const ProblemModel& model, std::size_t samples,
                                      std::uint64_t seed, std::optional<Box> box) {
  if (samples == 0) throw std::invalid_argument("validate_assumptions: samples must be >= 1");
  const Box region = box ? *box : model.domain();
  const std::size_t n = model.state_dim();
  const auto& bounds = model.bounds();
  constexpr double kLipschitzSlack = 1.05;

  AssumptionReport report;
  auto make = [](std::string name, std::optional<double> declared) {
    AssumptionCheck c;
    c.name = std::move(name);
    c.declared = declared;
    return c;
  };
  AssumptionCheck b_lip = make("b_lipschitz", bounds.state_lipschitz);
  AssumptionCheck s_lip = make("sigma_lipschitz", bounds.state_lipschitz);
  AssumptionCheck f_bnd = make("f_bounded", bounds.running_cost_sup);
  AssumptionCheck h_bnd = make("h_bounded", bounds.terminal_cost_sup);
  AssumptionCheck f_lip = make("f_lipschitz", bounds.cost_lipschitz);
  AssumptionCheck h_lip = make("h_lipschitz", bounds.cost_lipschitz);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, model.controls().size() - 1);
  std::vector<double> x1(n), x2(n), v1(n), v2(n), diff(n);

  auto record = [&](AssumptionCheck& c, double value, double s, std::size_t ui) {
    if (value > c.max_observed || c.witness_x1.empty()) {
      c.max_observed = value;
      c.witness_s = s;
      c.witness_x1 = x1;
      c.witness_x2 = x2;
      c.witness_control = ui;
    }
  };

  for (std::size_t k = 0; k < samples; ++k) {
    const Horizon& hz = model.horizon();
    const double s = hz.start + unit(rng) * hz.length();
    for (std::size_t i = 0; i < n; ++i) {
      x1[i] = region.lower[i] + unit(rng) * (region.upper[i] - region.lower[i]);
      x2[i] = region.lower[i] + unit(rng) * (region.upper[i] - region.lower[i]);
    }
    const std::size_t ui = pick(rng);
    const ControlView u = model.controls()[ui];
    const double dx = distance(x1, x2);
    if (dx == 0.0) continue;

    model.drift(s, x1, u, v1);
    model.drift(s, x2, u, v2);
    for (std::size_t i = 0; i < n; ++i) diff[i] = v1[i] - v2[i];
    record(b_lip, norm2(diff) / dx, s, ui);

    model.diffusion(s, x1, u, v1);
    model.diffusion(s, x2, u, v2);
    for (std::size_t i = 0; i < n; ++i) diff[i] = v1[i] - v2[i];
    record(s_lip, norm2(diff) / dx, s, ui);

    const double f1 = model.running_cost(s, x1, u);
    const double f2 = model.running_cost(s, x2, u);
    record(f_bnd, std::max(std::fabs(f1), std::fabs(f2)), s, ui);
    record(f_lip, std::fabs(f1 - f2) / dx, s, ui);

    const double h1 = model.terminal_cost(x1);
    const double h2 = model.terminal_cost(x2);
    record(h_bnd, std::max(std::fabs(h1), std::fabs(h2)), s, ui);
    record(h_lip, std::fabs(h1 - h2) / dx, s, ui);
  }

  auto judge = [](AssumptionCheck& c, double slack) {
    if (!c.declared) {
      c.status = CheckStatus::skipped;
    } else {
      const double limit = slack * *c.declared;
      c.status = c.max_observed <= limit + 1e-12 ? CheckStatus::pass : CheckStatus::fail;
    }
  };
  judge(b_lip, kLipschitzSlack);
  judge(s_lip, kLipschitzSlack);
  judge(f_bnd, 1.0);
  judge(h_bnd, 1.0);
  judge(f_lip, kLipschitzSlack);
  judge(h_lip, kLipschitzSlack);
  report.checks = {b_lip, s_lip, f_bnd, h_bnd, f_lip, h_lip};
  return report;
}

}  // namespace rsc
