#include "rsc/adjoint.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "rsc/error.hpp"
#include "rsc/qbsde.hpp"

namespace rsc {

std::string to_string(AdjointPath::Source source) {
  return source == AdjointPath::Source::closed_form ? "closed_form" : "linear_bsde_solve";
}

namespace {

// Upper-triangle coordinates (a, b), a <= b, of symmetric n x n matrices.
std::vector<std::pair<std::size_t, std::size_t>> triangle(std::size_t n) {
  std::vector<std::pair<std::size_t, std::size_t>> idx;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a; b < n; ++b) idx.emplace_back(a, b);
  }
  return idx;
}

// out = M^T S + S M for n x n row-major matrices.
void sym_product(const double* M, const double* S, double* out, std::size_t n) {
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += M[k * n + a] * S[k * n + b] + S[a * n + k] * M[k * n + b];
      out[a * n + b] = v;
    }
  }
}

// out = M^T S M
void congruence(const double* M, const double* S, double* out, std::size_t n) {
  std::vector<double> sm(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += S[a * n + k] * M[k * n + b];
      sm[a * n + b] = v;
    }
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      double v = 0.0;
      for (std::size_t k = 0; k < n; ++k) v += M[k * n + a] * sm[k * n + b];
      out[a * n + b] = v;
    }
  }
}

struct PathPoint {
  double s;
  StateView x;
  ControlView u;
  double z;
};

PathPoint point(const ProblemModel& model, const PathBundle& b, std::size_t k, std::size_t i) {
  return PathPoint{b.time_grid[k], b.state(k, i), model.controls()[b.control(k, i)],
                   b.Z[k * b.n_paths + i]};
}

}  // namespace

AdjointPath solve_adjoints(const ProblemModel& model, const PathBundle& bundle,
                           const ModelDerivatives& derivs, const PolynomialBasis& basis) {
  const auto missing = derivs.missing();
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ModelError("adjoint solve needs derivative callbacks: " + list);
  }
  if (bundle.Z.size() != bundle.n_steps * bundle.n_paths) {
    throw SolverError("adjoint solve needs Z on the bundle; run a backward solver first");
  }
  const std::size_t n = model.state_dim(), N = bundle.n_steps, Pn = bundle.n_paths;
  const double mu = model.risk();

  // First order: A = b_x^T + mu z sigma_x^T, B = sigma_x^T + mu z I, c = f_x.
  std::vector<double> terminal(Pn * n);
  for (std::size_t i = 0; i < Pn; ++i) {
    derivs.terminal_cost_gradient(bundle.state(N, i), std::span<double>(terminal.data() + i * n, n));
  }
  AffineGenerator first;
  first.dim = n;
  first.coefficients = [&](std::size_t k, std::size_t i, std::span<double> A, std::span<double> B,
                           std::span<double> c) {
    const PathPoint pt = point(model, bundle, k, i);
    std::vector<double> bx(n * n), sx(n * n);
    derivs.drift_jacobian(pt.s, pt.x, pt.u, bx);
    derivs.diffusion_jacobian(pt.s, pt.x, pt.u, sx);
    derivs.running_cost_gradient(pt.s, pt.x, pt.u, c);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        A[a * n + b] = bx[b * n + a] + mu * pt.z * sx[b * n + a];
        B[a * n + b] = sx[b * n + a] + (a == b ? mu * pt.z : 0.0);
      }
    }
  };
  const BackwardSolution pq = solve_linear_bsde(bundle, terminal, first, basis);

  // Second order on the upper triangle of S^n.
  const auto tri = triangle(n);
  const std::size_t d = tri.size();
  std::vector<double> terminal2(Pn * d), hxx(n * n);
  for (std::size_t i = 0; i < Pn; ++i) {
    derivs.terminal_cost_hessian(bundle.state(N, i), hxx);
    for (std::size_t e = 0; e < d; ++e) terminal2[i * d + e] = hxx[tri[e].first * n + tri[e].second];
  }
  AffineGenerator second;
  second.dim = d;
  second.coefficients = [&](std::size_t k, std::size_t i, std::span<double> A, std::span<double> B,
                            std::span<double> c) {
    const PathPoint pt = point(model, bundle, k, i);
    std::vector<double> bx(n * n), sx(n * n), sig(n), tmp(n * n), unit(n * n), w(n), hess(n * n);
    derivs.drift_jacobian(pt.s, pt.x, pt.u, bx);
    derivs.diffusion_jacobian(pt.s, pt.x, pt.u, sx);
    const double* p = pq.Y.data() + (k * Pn + i) * n;
    const double* q = pq.Z.data() + (k * Pn + i) * n;

    // Columns of the linear maps: images of the symmetric unit matrices.
    for (std::size_t e = 0; e < d; ++e) {
      std::fill(unit.begin(), unit.end(), 0.0);
      unit[tri[e].first * n + tri[e].second] = 1.0;
      unit[tri[e].second * n + tri[e].first] = 1.0;
      std::vector<double> la(n * n), lb(n * n);
      sym_product(bx.data(), unit.data(), la.data(), n);
      congruence(sx.data(), unit.data(), tmp.data(), n);
      std::vector<double> sxu(n * n);
      sym_product(sx.data(), unit.data(), sxu.data(), n);
      for (std::size_t m = 0; m < n * n; ++m) {
        la[m] += tmp[m] + mu * pt.z * sxu[m];
        lb[m] = sxu[m] + mu * pt.z * unit[m];
      }
      for (std::size_t r = 0; r < d; ++r) {
        const std::size_t at = tri[r].first * n + tri[r].second;
        A[r * d + e] = la[at];
        B[r * d + e] = lb[at];
      }
    }

    // c = mu sx^T p p^T sx + mu sx^T p q^T + mu q p^T sx + mu q q^T + H_xx.
    std::vector<double> sxp(n, 0.0);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t k2 = 0; k2 < n; ++k2) sxp[a] += sx[k2 * n + a] * p[k2];
    }
    std::vector<double> cm(n * n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = 0; b < n; ++b) {
        cm[a * n + b] = mu * sxp[a] * sxp[b] + mu * sxp[a] * q[b] + mu * q[a] * sxp[b] +
                        mu * q[a] * q[b];
      }
    }
    derivs.drift_hessian_contraction(pt.s, pt.x, pt.u, std::span<const double>(p, n), hess);
    for (std::size_t m = 0; m < n * n; ++m) cm[m] += hess[m];
    for (std::size_t a = 0; a < n; ++a) w[a] = q[a] + mu * pt.z * p[a];
    derivs.diffusion_hessian_contraction(pt.s, pt.x, pt.u, w, hess);
    for (std::size_t m = 0; m < n * n; ++m) cm[m] += hess[m];
    derivs.running_cost_hessian(pt.s, pt.x, pt.u, hess);
    for (std::size_t m = 0; m < n * n; ++m) cm[m] += hess[m];
    for (std::size_t r = 0; r < d; ++r) c[r] = cm[tri[r].first * n + tri[r].second];
  };
  const BackwardSolution PQ = solve_linear_bsde(bundle, terminal2, second, basis);

  AdjointPath out;
  out.source = AdjointPath::Source::linear_bsde_solve;
  out.n_steps = N;
  out.n_paths = Pn;
  out.dim = n;
  out.time_grid = bundle.time_grid;
  out.p = pq.Y;
  out.q.resize((N + 1) * Pn * n);
  std::copy(pq.Z.begin(), pq.Z.end(), out.q.begin());
  std::copy(pq.Z.end() - static_cast<std::ptrdiff_t>(Pn * n), pq.Z.end(),
            out.q.begin() + static_cast<std::ptrdiff_t>(N * Pn * n));
  out.P.resize((N + 1) * Pn * n * n);
  out.Q.resize((N + 1) * Pn * n * n);
  for (std::size_t k = 0; k <= N; ++k) {
    const std::size_t kz = std::min(k, N - 1);
    for (std::size_t i = 0; i < Pn; ++i) {
      for (std::size_t e = 0; e < d; ++e) {
        const auto [a, b] = tri[e];
        const double pv = PQ.Y[(k * Pn + i) * d + e];
        const double qv = PQ.Z[(kz * Pn + i) * d + e];
        double* Pm = out.P.data() + (k * Pn + i) * n * n;
        double* Qm = out.Q.data() + (k * Pn + i) * n * n;
        Pm[a * n + b] = Pm[b * n + a] = pv;
        Qm[a * n + b] = Qm[b * n + a] = qv;
      }
    }
  }
  return out;
}

AdjointPath closed_form_adjoints(const ClosedFormExample& ex, const PathBundle& bundle) {
  AdjointPath out;
  out.source = AdjointPath::Source::closed_form;
  out.n_steps = bundle.n_steps;
  out.n_paths = bundle.n_paths;
  out.dim = 1;
  out.time_grid = bundle.time_grid;
  const std::size_t total = (bundle.n_steps + 1) * bundle.n_paths;
  out.p.resize(total);
  out.q.resize(total);
  out.P.resize(total);
  out.Q.resize(total);
  for (std::size_t k = 0; k <= bundle.n_steps; ++k) {
    const auto first = ex.adjoint_first(bundle.time_grid[k]);
    const auto second = ex.adjoint_second(bundle.time_grid[k]);
    for (std::size_t i = 0; i < bundle.n_paths; ++i) {
      const std::size_t at = k * bundle.n_paths + i;
      out.p[at] = first[0];
      out.q[at] = first[1];
      out.P[at] = second[0];
      out.Q[at] = second[1];
    }
  }
  return out;
}

AdjointComparison compare_adjoints(const AdjointPath& a, const AdjointPath& b) {
  if (a.p.size() != b.p.size() || a.P.size() != b.P.size()) {
    throw std::invalid_argument("compare_adjoints: shape mismatch");
  }
  AdjointComparison c;
  auto worst = [](const std::vector<double>& x, const std::vector<double>& y) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::fabs(x[i] - y[i]));
    return m;
  };
  c.max_p_error = worst(a.p, b.p);
  c.max_q_error = worst(a.q, b.q);
  c.max_P_error = worst(a.P, b.P);
  c.max_Q_error = worst(a.Q, b.Q);
  const std::size_t n = a.dim;
  for (std::size_t m = 0; m + n * n <= a.P.size(); m += n * n) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t s = r + 1; s < n; ++s) {
        c.max_P_asymmetry = std::max(c.max_P_asymmetry, std::fabs(a.P[m + r * n + s] - a.P[m + s * n + r]));
      }
    }
  }
  return c;
}

double hamiltonian_H(const ProblemModel& model, double s, StateView x, double z, ControlView u,
                     std::span<const double> p, std::span<const double> q) {
  const std::size_t n = model.state_dim();
  std::vector<double> b(n), sig(n);
  model.drift(s, x, u, b);
  model.diffusion(s, x, u, sig);
  double pb = 0.0, qs = 0.0, sp = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    pb += p[a] * b[a];
    qs += q[a] * sig[a];
    sp += sig[a] * p[a];
  }
  return pb + model.running_cost(s, x, u) + qs + model.risk() * sp * z;
}

double hamiltonian_script_H(const ProblemModel& model, double s, StateView x, double z,
                            ControlView u, std::span<const double> p,
                            std::span<const double> q, std::span<const double> P,
                            std::span<const double> sigma_bar) {
  const std::size_t n = model.state_dim();
  std::vector<double> sig(n), diff(n);
  model.diffusion(s, x, u, sig);
  for (std::size_t a = 0; a < n; ++a) diff[a] = sig[a] - sigma_bar[a];
  double quad = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      quad += diff[a] * (P[a * n + b] + model.risk() * p[a] * p[b]) * diff[b];
    }
  }
  return hamiltonian_H(model, s, x, z, u, p, q) + 0.5 * quad;
}

MaximumConditionReport verify_maximum_condition(const ProblemModel& model,
                                                const PathBundle& bundle,
                                                const AdjointPath& adj, double tolerance,
                                                std::size_t path_stride) {
  if (bundle.Z.size() != bundle.n_steps * bundle.n_paths) {
    throw SolverError("maximum-condition check needs Z on the bundle");
  }
  if (adj.n_steps != bundle.n_steps || adj.n_paths != bundle.n_paths) {
    throw std::invalid_argument("adjoints do not match the bundle");
  }
  const std::size_t n = model.state_dim();
  const std::size_t nu = model.controls().size();
  const std::size_t stride = std::max<std::size_t>(1, path_stride);
  MaximumConditionReport rep;
  rep.tolerance = tolerance;
  rep.worst_violation = -std::numeric_limits<double>::infinity();
  rep.min_equality_gap = std::numeric_limits<double>::infinity();
  std::vector<double> sigma_bar(n), table(nu);

  for (std::size_t k = 0; k < bundle.n_steps; ++k) {
    const double s = bundle.time_grid[k];
    for (std::size_t i = 0; i < bundle.n_paths; i += stride) {
      const StateView x = bundle.state(k, i);
      const std::size_t ubar = bundle.control(k, i);
      const double z = bundle.Z[k * bundle.n_paths + i];
      model.diffusion(s, x, model.controls()[ubar], sigma_bar);
      for (std::size_t c = 0; c < nu; ++c) {
        table[c] = hamiltonian_script_H(model, s, x, z, model.controls()[c], adj.p_at(k, i),
                                        adj.q_at(k, i), adj.P_at(k, i), sigma_bar);
      }
      double viol = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < nu; ++c) {
        viol = std::max(viol, table[ubar] - table[c]);
        if (c != ubar) rep.min_equality_gap = std::min(rep.min_equality_gap, std::fabs(table[c] - table[ubar]));
      }
      ++rep.cells;
      if (viol <= tolerance) ++rep.passed;
      if (viol > rep.worst_violation) {
        rep.worst_violation = viol;
        rep.worst_step = k;
        rep.worst_path = i;
        rep.worst_s = s;
        rep.worst_x.assign(x.begin(), x.end());
        rep.worst_table = table;
      }
    }
  }
  rep.pass_fraction = rep.cells ? static_cast<double>(rep.passed) / static_cast<double>(rep.cells) : 0.0;
  return rep;
}

}  // namespace rsc
