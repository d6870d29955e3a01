#include "rsc/qbsde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <cstdlib>

#include "rsc/error.hpp"

namespace rsc {

std::string to_string(BackwardMethod method) {
  switch (method) {
    case BackwardMethod::transform:
      return "transform";
    case BackwardMethod::regression:
      return "regression";
    case BackwardMethod::linear:
      return "linear";
  }
  return "unknown";
}

double BackwardSolution::max_abs_y() const {
  double m = 0.0;
  for (double v : Y) m = std::max(m, std::fabs(v));
  return m;
}

namespace {

const double* slice(const PathBundle& b, std::size_t k, std::size_t first = 0) {
  return b.X.data() + (k * b.n_paths + first) * b.state_dim;
}

// f(s_k, X_k, u_k) for every path at step k.
void running_costs_at(const ProblemModel& model, const PathBundle& b, std::size_t k,
                      std::size_t first, std::size_t count, std::span<double> out) {
  const double s = b.time_grid[k];
  for (std::size_t i = 0; i < count; ++i) {
    out[i] = model.running_cost(s, b.state(k, first + i), model.controls()[b.control(k, first + i)]);
  }
}

void terminal_values(const ProblemModel& model, const PathBundle& b, std::size_t first,
                     std::size_t count, std::span<double> out) {
  for (std::size_t i = 0; i < count; ++i) out[i] = model.terminal_cost(b.state(b.n_steps, first + i));
}

// A conditional expectation lies in the range of the variable; polynomial
// fits at sparse tail points need not.
void clamp_to_range(std::span<const double> target, std::span<double> fitted) {
  const auto [lo, hi] = std::minmax_element(target.begin(), target.end());
  for (double& v : fitted) v = std::clamp(v, *lo, *hi);
}

void require_bundle(const PathBundle& b) {
  if (b.n_steps == 0 || b.n_paths == 0 || b.time_grid.size() != b.n_steps + 1) {
    throw SolverError("backward solver needs a simulated bundle");
  }
}

}  // namespace

BackwardSolution solve_by_transform(const ProblemModel& model, const PathBundle& bundle,
                                    const PolynomialBasis& basis) {
  require_bundle(bundle);
  const std::size_t P = bundle.n_paths, N = bundle.n_steps, n = bundle.state_dim;
  const double mu = model.risk();
  BackwardSolution sol;
  sol.method = BackwardMethod::transform;
  sol.basis = basis.describe();
  sol.n_steps = N;
  sol.n_paths = P;
  sol.Y.resize((N + 1) * P);
  sol.Z.resize(N * P);

  std::vector<double> payoff(P), f(P), w(P), fit(P), target(P);
  terminal_values(model, bundle, 0, P, payoff);
  std::copy(payoff.begin(), payoff.end(), sol.Y.begin() + N * P);

  for (std::size_t kk = N; kk-- > 0;) {
    const double dt = bundle.dt(kk);
    running_costs_at(model, bundle, kk, 0, P, f);
    for (std::size_t i = 0; i < P; ++i) payoff[i] = f[i] * dt + payoff[i];
    const double top = *std::max_element(payoff.begin(), payoff.end());
    for (std::size_t i = 0; i < P; ++i) w[i] = std::exp(mu * (payoff[i] - top));

    StepRegression reg(slice(bundle, kk), P, n, basis, kk);
    reg.fit(w, fit);
    clamp_to_range(w, fit);
    double* y = sol.Y.data() + kk * P;
    for (std::size_t i = 0; i < P; ++i) {
      if (!(fit[i] > 0.0)) {
        std::ostringstream os;
        os << "transform regression gave E[exp(mu*cost)|X] = " << fit[i] << " <= 0 at step "
           << kk << ", path " << i << ", x1=" << bundle.x(kk, i)
           << "; the basis cannot represent the exponential payoff";
        throw NonPositiveTransformError(os.str());
      }
      y[i] = top + std::log(fit[i]) / mu;
    }

    const double* y_next = sol.Y.data() + (kk + 1) * P;
    for (std::size_t i = 0; i < P; ++i) {
      target[i] = std::expm1(mu * (y_next[i] - y[i])) * bundle.dw(kk, i);
    }
    reg.fit(target, fit);
    double* z = sol.Z.data() + kk * P;
    for (std::size_t i = 0; i < P; ++i) z[i] = fit[i] / (mu * dt);

    if (kk == 0) {
      // Delta method on the exp-scale mean; X(s_0) is shared by all paths.
      const double mean = shifted_mean(w);
      double ss = 0.0;
      for (double v : w) ss += (v - mean) * (v - mean);
      sol.y0 = top + std::log(mean) / mu;
      if (P > 1) {
        const double se = std::sqrt(ss / static_cast<double>(P - 1) / static_cast<double>(P));
        sol.y0_std_error = se / (mu * mean);
      }
    }
  }
  return sol;
}

double sup_norm_proxy(const ProblemModel& model, const PathBundle& bundle) {
  const auto& b = model.bounds();
  const double T = model.horizon().length();
  double h_sup = 0.0, f_sup = 0.0;
  if (b.terminal_cost_sup) {
    h_sup = *b.terminal_cost_sup;
  } else {
    std::vector<double> h(bundle.n_paths);
    terminal_values(model, bundle, 0, bundle.n_paths, h);
    for (double v : h) h_sup = std::max(h_sup, std::fabs(v));
  }
  if (b.running_cost_sup) {
    f_sup = *b.running_cost_sup;
  } else {
    std::vector<double> f(bundle.n_paths);
    for (std::size_t k = 0; k < bundle.n_steps; ++k) {
      running_costs_at(model, bundle, k, 0, bundle.n_paths, f);
      for (double v : f) f_sup = std::max(f_sup, std::fabs(v));
    }
  }
  return h_sup + T * f_sup;
}

namespace {

// Regression scheme over paths [first, first + count). Writes Y (N+1 slices)
// and Z (N slices) with stride count when the outputs are non-null; returns Y0 mean.
double regression_core(const ProblemModel& model, const PathBundle& bundle, std::size_t first,
                       std::size_t count, const PolynomialBasis& basis, double limit,
                       std::vector<double>* Y, std::vector<double>* Z) {
  const std::size_t N = bundle.n_steps, n = bundle.state_dim;
  const double half_mu = 0.5 * model.risk();
  std::vector<double> y_next(count), y(count), f(count), yhat(count), target(count), zk(count);
  terminal_values(model, bundle, first, count, y_next);
  if (Y) std::copy(y_next.begin(), y_next.end(), Y->begin() + N * count);

  for (std::size_t kk = N; kk-- > 0;) {
    const double dt = bundle.dt(kk);
    StepRegression reg(slice(bundle, kk, first), count, n, basis, kk);
    reg.fit(y_next, yhat);
    for (std::size_t i = 0; i < count; ++i) {
      target[i] = (y_next[i] - yhat[i]) * bundle.dw(kk, first + i);
    }
    reg.fit(target, zk);
    running_costs_at(model, bundle, kk, first, count, f);
    double worst = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      zk[i] /= dt;
      y[i] = yhat[i] + (f[i] + half_mu * zk[i] * zk[i]) * dt;
      worst = std::max(worst, std::fabs(y[i]));
    }
    if (!(worst <= limit)) {
      std::ostringstream os;
      os << "regression solver diverged at step " << kk << ": max |Y| = " << worst
         << " exceeds " << limit;
      throw DivergenceError(os.str());
    }
    if (Y) std::copy(y.begin(), y.end(), Y->begin() + kk * count);
    if (Z) std::copy(zk.begin(), zk.end(), Z->begin() + kk * count);
    y_next.swap(y);
  }
  return shifted_mean(y_next);
}

}  // namespace

BackwardSolution solve_by_regression(const ProblemModel& model, const PathBundle& bundle,
                                     const RegressionOptions& options) {
  require_bundle(bundle);
  const std::size_t P = bundle.n_paths, N = bundle.n_steps;
  const double limit =
      options.divergence_factor * std::max(sup_norm_proxy(model, bundle), 1e-12);
  BackwardSolution sol;
  sol.method = BackwardMethod::regression;
  sol.basis = options.basis.describe();
  sol.n_steps = N;
  sol.n_paths = P;
  sol.Y.resize((N + 1) * P);
  sol.Z.resize(N * P);
  sol.y0 = regression_core(model, bundle, 0, P, options.basis, limit, &sol.Y, &sol.Z);

  // Batch means: independent solves on contiguous path ranges.
  const std::size_t B = options.error_batches;
  std::size_t cells = 1;
  for (std::size_t d = 0; d < bundle.state_dim; ++d) cells *= std::max<std::size_t>(1, options.basis.cells_per_dim);
  if (B >= 2 && P / B >= 2 * (options.basis.degree + 2) * cells) {
    std::vector<double> est(B);
    const std::size_t size = P / B;
    for (std::size_t b = 0; b < B; ++b) {
      est[b] = regression_core(model, bundle, b * size, size, options.basis, limit, nullptr,
                               nullptr);
    }
    const double mean = shifted_mean(est);
    double ss = 0.0;
    for (double v : est) ss += (v - mean) * (v - mean);
    sol.y0_std_error = std::sqrt(ss / static_cast<double>(B - 1) / static_cast<double>(B));
  }
  return sol;
}

void attach(PathBundle& bundle, const BackwardSolution& solution) {
  if (solution.dim != 1 || solution.n_paths != bundle.n_paths ||
      solution.n_steps != bundle.n_steps) {
    throw SolverError("attach: solution does not match the bundle");
  }
  bundle.Y = solution.Y;
  bundle.Z = solution.Z;
}

BackwardSolution solve_linear_bsde(const PathBundle& bundle, std::span<const double> terminal,
                                   const AffineGenerator& generator,
                                   const PolynomialBasis& basis) {
  require_bundle(bundle);
  const std::size_t P = bundle.n_paths, N = bundle.n_steps, n = bundle.state_dim;
  const std::size_t d = generator.dim;
  if (d == 0 || !generator.coefficients) throw SolverError("linear BSDE needs dim >= 1 and coefficients");
  if (terminal.size() != P * d) throw SolverError("linear BSDE terminal has wrong size");

  double xi_max = 0.0;
  for (double v : terminal) {
    if (!std::isfinite(v)) throw NonFiniteError("linear BSDE terminal value is not finite");
    xi_max = std::max(xi_max, std::fabs(v));
  }
  const double limit = 1e6 * (1.0 + xi_max);

  BackwardSolution sol;
  sol.method = BackwardMethod::linear;
  sol.basis = basis.describe();
  sol.n_steps = N;
  sol.n_paths = P;
  sol.dim = d;
  sol.Y.resize((N + 1) * P * d);
  sol.Z.resize(N * P * d);
  std::copy(terminal.begin(), terminal.end(), sol.Y.begin() + N * P * d);

  std::vector<double> comp(P), yhat(P * d), zk(P * d), fit(P), target(P);
  std::vector<double> A(d * d), B(d * d), c(d);
  for (std::size_t kk = N; kk-- > 0;) {
    const double dt = bundle.dt(kk);
    const double* y_next = sol.Y.data() + (kk + 1) * P * d;
    StepRegression reg(slice(bundle, kk), P, n, basis, kk);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < P; ++i) comp[i] = y_next[i * d + j];
      reg.fit(comp, fit);
      for (std::size_t i = 0; i < P; ++i) {
        yhat[i * d + j] = fit[i];
        target[i] = (comp[i] - fit[i]) * bundle.dw(kk, i);
      }
      reg.fit(target, fit);
      for (std::size_t i = 0; i < P; ++i) zk[i * d + j] = fit[i] / dt;
    }
    double* y = sol.Y.data() + kk * P * d;
    double worst = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      generator.coefficients(kk, i, A, B, c);
      const double* yh = yhat.data() + i * d;
      const double* z = zk.data() + i * d;
      for (std::size_t r = 0; r < d; ++r) {
        double g = c[r];
        for (std::size_t col = 0; col < d; ++col) {
          g += A[r * d + col] * yh[col] + B[r * d + col] * z[col];
        }
        const double v = yh[r] + g * dt;
        if (!std::isfinite(v)) {
          throw NonFiniteError("linear BSDE produced a non-finite value at step " +
                               std::to_string(kk) + ", path " + std::to_string(i));
        }
        y[i * d + r] = v;
        worst = std::max(worst, std::fabs(v));
      }
    }
    if (worst > limit) {
      std::ostringstream os;
      os << "linear BSDE diverged at step " << kk << ": max |Y| = " << worst;
      throw DivergenceError(os.str());
    }
    std::copy(zk.begin(), zk.end(), sol.Z.begin() + kk * P * d);
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < P; ++i) acc += sol.Y[i * d] - sol.Y[0];
  sol.y0 = sol.Y[0] + acc / static_cast<double>(P);
  return sol;
}

StabilityReport stability_check(const ProblemModel& model, const PathBundle& bundle,
                                const ScalarCoefficient& f1, const TerminalFunction& h1,
                                const ScalarCoefficient& f2, const TerminalFunction& h2,
                                const PolynomialBasis& basis) {
  const ProblemModel m1 = model.with_costs(f1, h1);
  const ProblemModel m2 = model.with_costs(f2, h2);
  const BackwardSolution s1 = solve_by_transform(m1, bundle, basis);
  const BackwardSolution s2 = solve_by_transform(m2, bundle, basis);

  StabilityReport r;
  for (std::size_t j = 0; j < s1.Y.size(); ++j) {
    r.sup_y_difference = std::max(r.sup_y_difference, std::fabs(s1.Y[j] - s2.Y[j]));
  }
  const std::size_t P = bundle.n_paths;
  for (std::size_t i = 0; i < P; ++i) {
    const StateView x = bundle.state(bundle.n_steps, i);
    r.sup_h_difference = std::max(r.sup_h_difference, std::fabs(h1(x) - h2(x)));
  }
  for (std::size_t k = 0; k < bundle.n_steps; ++k) {
    double worst = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      const ControlView u = model.controls()[bundle.control(k, i)];
      const StateView x = bundle.state(k, i);
      const double s = bundle.time_grid[k];
      worst = std::max(worst, std::fabs(f1(s, x, u) - f2(s, x, u)));
    }
    r.int_f_difference += worst * bundle.dt(k);
  }
  const double data = r.sup_h_difference + r.int_f_difference;
  r.ratio = data > 0.0 ? r.sup_y_difference / data : 0.0;
  return r;
}

}  // namespace rsc
