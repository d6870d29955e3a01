#include "rsc/hjb.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "rsc/error.hpp"
#include "rsc/kernels.hpp"

namespace rsc {

double hamiltonian_G(const ProblemModel& model, double s, StateView x, ControlView u,
                     std::span<const double> p, std::span<const double> P) {
  const std::size_t n = model.state_dim();
  if (x.size() != n || p.size() != n || P.size() != n * n) {
    throw std::invalid_argument("hamiltonian_G: dimension mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::fabs(P[i * n + j] - P[j * n + i]) > 1e-12) {
        throw std::invalid_argument("hamiltonian_G: P is not symmetric");
      }
    }
  }
  double b_buf[8], s_buf[8];
  std::vector<double> b_vec, s_vec;
  std::span<double> b(b_buf, n), sig(s_buf, n);
  if (n > 8) {
    b_vec.resize(n);
    s_vec.resize(n);
    b = b_vec;
    sig = s_vec;
  }
  model.drift(s, x, u, b);
  model.diffusion(s, x, u, sig);
  const double f = model.running_cost(s, x, u);
  double pb = 0.0, sp = 0.0, tr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    pb += p[i] * b[i];
    sp += sig[i] * p[i];
    for (std::size_t j = 0; j < n; ++j) tr += sig[i] * sig[j] * P[i * n + j];
  }
  return f + pb + 0.5 * model.risk() * sp * sp + 0.5 * tr;
}

std::string to_string(BoundaryMode mode) {
  return mode == BoundaryMode::dirichlet ? "dirichlet" : "extrapolate";
}

BoundaryMode parse_boundary_mode(const std::string& name) {
  if (name == "extrapolate") return BoundaryMode::extrapolate;
  if (name == "dirichlet") return BoundaryMode::dirichlet;
  throw ConfigError("unknown boundary mode '" + name + "' (extrapolate|dirichlet)");
}

std::size_t ValueGrid::n_space() const {
  std::size_t m = 1;
  for (const auto& a : axes) m *= a.size();
  return m;
}

namespace {

// Index of the cell [axis[i], axis[i+1]] holding v, and the weight of axis[i+1].
std::pair<std::size_t, double> locate(const std::vector<double>& axis, double v) {
  const double tol = 1e-12 * std::max(1.0, std::fabs(axis.back() - axis.front()));
  if (v < axis.front() - tol || v > axis.back() + tol) {
    throw std::out_of_range("value grid lookup outside the grid");
  }
  if (axis.size() == 1) return {0, 0.0};
  auto it = std::upper_bound(axis.begin(), axis.end(), v);
  std::size_t i = it == axis.begin() ? 0 : static_cast<std::size_t>(it - axis.begin()) - 1;
  i = std::min(i, axis.size() - 2);
  double w = (v - axis[i]) / (axis[i + 1] - axis[i]);
  w = std::clamp(w, 0.0, 1.0);
  return {i, w};
}

}  // namespace

double ValueGrid::interpolate(double t, StateView x) const {
  if (x.size() != dim()) throw std::invalid_argument("interpolate: dimension mismatch");
  const auto [ti, tw] = locate(t_nodes, t);
  const std::size_t n = dim();
  std::vector<std::size_t> base(n);
  std::vector<double> w(n);
  for (std::size_t d = 0; d < n; ++d) {
    const auto [i, wd] = locate(axes[d], x[d]);
    base[d] = i;
    w[d] = wd;
  }
  const std::size_t ns = n_space();
  auto slice_value = [&](std::size_t tk) {
    double acc = 0.0;
    for (std::size_t corner = 0; corner < (std::size_t{1} << n); ++corner) {
      double weight = 1.0;
      std::size_t flat = 0;
      for (std::size_t d = 0; d < n; ++d) {
        const bool up = (corner >> d) & 1U;
        const std::size_t idx = std::min(base[d] + (up ? 1 : 0), axes[d].size() - 1);
        weight *= up ? w[d] : 1.0 - w[d];
        flat = flat * axes[d].size() + idx;
      }
      if (weight != 0.0) acc += weight * V[tk * ns + flat];
    }
    return acc;
  };
  const double v0 = slice_value(ti);
  if (tw == 0.0 || ti + 1 >= t_nodes.size()) return v0;
  return (1.0 - tw) * v0 + tw * slice_value(ti + 1);
}

GridError max_interior_error(const ValueGrid& grid,
                             const std::function<double(double t, double x)>& reference,
                             double margin_fraction) {
  if (grid.dim() != 1) throw std::invalid_argument("max_interior_error needs a 1-D grid");
  const auto& axis = grid.axes[0];
  const double lo = axis.front(), hi = axis.back();
  const double margin = margin_fraction * (hi - lo);
  GridError e;
  for (std::size_t j = 0; j < grid.t_nodes.size(); ++j) {
    for (std::size_t i = 0; i < axis.size(); ++i) {
      if (axis[i] < lo + margin || axis[i] > hi - margin) continue;
      const double err = std::fabs(grid.value(j, i) - reference(grid.t_nodes[j], axis[i]));
      ++e.nodes;
      if (err > e.max_error || e.nodes == 1) {
        e.max_error = err;
        e.t = grid.t_nodes[j];
        e.x = axis[i];
      }
    }
  }
  return e;
}

GridError probe_error(const ValueGrid& grid,
                      const std::function<double(double t, double x)>& reference,
                      const std::vector<std::array<double, 2>>& points) {
  if (grid.dim() != 1) throw std::invalid_argument("probe_error needs a 1-D grid");
  GridError e;
  for (const auto& pt : points) {
    const double err = std::fabs(grid.interpolate(pt[0], pt[1]) - reference(pt[0], pt[1]));
    ++e.nodes;
    if (err > e.max_error || e.nodes == 1) {
      e.max_error = err;
      e.t = pt[0];
      e.x = pt[1];
    }
  }
  return e;
}

std::vector<double> uniform_axis(double lo, double hi, std::size_t n) {
  if (n < 2) throw ModelError("grid axis needs at least 2 nodes");
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  a[n - 1] = hi;
  return a;
}

namespace {

struct Layout {
  std::size_t n = 1;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> strides;
  std::size_t total = 1;
  std::vector<double> dx;
};

Layout make_layout(const std::vector<std::vector<double>>& axes) {
  Layout L;
  L.n = axes.size();
  L.sizes.resize(L.n);
  L.strides.resize(L.n);
  L.dx.resize(L.n);
  for (std::size_t d = 0; d < L.n; ++d) {
    L.sizes[d] = axes[d].size();
    L.dx[d] = axes[d][1] - axes[d][0];
  }
  std::size_t stride = 1;
  for (std::size_t d = L.n; d-- > 0;) {
    L.strides[d] = stride;
    stride *= L.sizes[d];
  }
  L.total = stride;
  return L;
}

// Coefficients tabulated at every node for every control.
struct CoefficientTable {
  std::vector<std::vector<double>> f;   // [c][node]
  std::vector<std::vector<double>> b;   // [c][node * n + d]
  std::vector<std::vector<double>> sg;  // [c][node * n + d]
  std::vector<std::vector<double>> s2;  // 1-D only: sigma^2
};

void fill_coefficients(const ProblemModel& model, const std::vector<std::vector<double>>& axes,
                       const Layout& L, double t, CoefficientTable& tab) {
  const std::size_t nc = model.controls().size();
  const std::size_t n = L.n;
  tab.f.resize(nc);
  tab.b.resize(nc);
  tab.sg.resize(nc);
  tab.s2.resize(nc);
  std::vector<double> x(n);
  for (std::size_t c = 0; c < nc; ++c) {
    tab.f[c].resize(L.total);
    tab.b[c].resize(L.total * n);
    tab.sg[c].resize(L.total * n);
    if (n == 1) tab.s2[c].resize(L.total);
    const ControlView u = model.controls()[c];
    for (std::size_t node = 0; node < L.total; ++node) {
      std::size_t rem = node;
      for (std::size_t d = 0; d < n; ++d) {
        x[d] = axes[d][rem / L.strides[d]];
        rem %= L.strides[d];
      }
      std::span<double> bo(tab.b[c].data() + node * n, n), so(tab.sg[c].data() + node * n, n);
      model.drift(t, x, u, bo);
      model.diffusion(t, x, u, so);
      tab.f[c][node] = model.running_cost(t, x, u);
      for (std::size_t d = 0; d < n; ++d) {
        if (!std::isfinite(bo[d]) || !std::isfinite(so[d]) || !std::isfinite(tab.f[c][node])) {
          std::ostringstream os;
          os << "non-finite coefficient at t=" << t << ", node " << node << ", u=#" << c;
          throw NonFiniteError(os.str());
        }
      }
      if (n == 1) tab.s2[c][node] = so[0] * so[0];
    }
  }
}

// max over nodes, controls of sum_d (sigma_d^2/dx_d^2 + |b_d|/dx_d) + cross terms.
double stability_rate(const CoefficientTable& tab, const Layout& L) {
  const std::size_t n = L.n;
  double rate = 0.0;
  for (std::size_t c = 0; c < tab.f.size(); ++c) {
    for (std::size_t node = 0; node < L.total; ++node) {
      double r = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const double sd = tab.sg[c][node * n + d];
        r += sd * sd / (L.dx[d] * L.dx[d]) + std::fabs(tab.b[c][node * n + d]) / L.dx[d];
        for (std::size_t e = d + 1; e < n; ++e) {
          r += std::fabs(sd * tab.sg[c][node * n + e]) / (L.dx[d] * L.dx[e]);
        }
      }
      rate = std::max(rate, r);
    }
  }
  return rate;
}

// Extra rate from the artificial viscosity: 2 half_mu sigma^2 |p| / dx per dimension.
double viscosity_rate(const CoefficientTable& tab, const Layout& L, const std::vector<double>& v,
                      double half_mu) {
  const std::size_t n = L.n;
  double rate = 0.0;
  for (std::size_t node = 0; node < L.total; ++node) {
    double extra_max = 0.0;
    for (std::size_t c = 0; c < tab.f.size(); ++c) {
      double extra = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        const std::size_t coord = (node / L.strides[d]) % L.sizes[d];
        if (coord == 0 || coord + 1 == L.sizes[d]) continue;
        const double pc =
            (v[node + L.strides[d]] - v[node - L.strides[d]]) / (2.0 * L.dx[d]);
        const double sd = tab.sg[c][node * n + d];
        extra += 2.0 * half_mu * sd * sd * std::fabs(pc) / L.dx[d];
      }
      extra_max = std::max(extra_max, extra);
    }
    rate = std::max(rate, extra_max);
  }
  return rate;
}

double dirichlet_value(const ProblemModel& model, StateView x, double t) {
  double fmin = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < model.controls().size(); ++c) {
    fmin = std::min(fmin, model.running_cost(t, x, model.controls()[c]));
  }
  return model.terminal_cost(x) + (model.horizon().end - t) * fmin;
}

void apply_boundary(const ProblemModel& model, const std::vector<std::vector<double>>& axes,
                    const Layout& L, BoundaryMode mode, double t, std::vector<double>& v) {
  const std::size_t n = L.n;
  if (mode == BoundaryMode::dirichlet) {
    std::vector<double> x(n);
    for (std::size_t node = 0; node < L.total; ++node) {
      bool edge = false;
      std::size_t rem = node;
      for (std::size_t d = 0; d < n; ++d) {
        const std::size_t coord = rem / L.strides[d];
        rem %= L.strides[d];
        x[d] = axes[d][coord];
        edge = edge || coord == 0 || coord + 1 == L.sizes[d];
      }
      if (edge) v[node] = dirichlet_value(model, x, t);
    }
    return;
  }
  for (std::size_t d = 0; d < n; ++d) {
    const std::size_t s = L.strides[d];
    const std::size_t last = L.sizes[d] - 1;
    for (std::size_t node = 0; node < L.total; ++node) {
      const std::size_t coord = (node / s) % L.sizes[d];
      if (coord == 0) {
        v[node] = 2.0 * v[node + s] - v[node + 2 * s];
      } else if (coord == last) {
        v[node] = 2.0 * v[node - s] - v[node - 2 * s];
      }
    }
  }
}

// One explicit step on an n-D grid (interior nodes), scalar reference path.
void step_nd(const CoefficientTable& tab, const Layout& L, const std::vector<double>& v,
             std::vector<double>& out, std::vector<std::int32_t>* policy, double dt,
             double half_mu, bool viscosity) {
  const std::size_t n = L.n;
  std::vector<double> pf(n), pb(n), pc(n), P(n * n);
  for (std::size_t node = 0; node < L.total; ++node) {
    bool interior = true;
    for (std::size_t d = 0; d < n && interior; ++d) {
      const std::size_t coord = (node / L.strides[d]) % L.sizes[d];
      interior = coord > 0 && coord + 1 < L.sizes[d];
    }
    if (!interior) continue;
    const double v0 = v[node];
    for (std::size_t d = 0; d < n; ++d) {
      const std::size_t s = L.strides[d];
      const double vp = v[node + s], vm = v[node - s];
      pf[d] = (vp - v0) / L.dx[d];
      pb[d] = (v0 - vm) / L.dx[d];
      pc[d] = (vp - vm) / (2.0 * L.dx[d]);
      P[d * n + d] = ((vp - v0) - (v0 - vm)) / (L.dx[d] * L.dx[d]);
      for (std::size_t e = d + 1; e < n; ++e) {
        const std::size_t r = L.strides[e];
        const double cross =
            (v[node + s + r] - v[node + s - r] - v[node - s + r] + v[node - s - r]) /
            (4.0 * L.dx[d] * L.dx[e]);
        P[d * n + e] = cross;
        P[e * n + d] = cross;
      }
    }
    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_idx = 0;
    for (std::size_t c = 0; c < tab.f.size(); ++c) {
      const double* b = tab.b[c].data() + node * n;
      const double* sg = tab.sg[c].data() + node * n;
      double g = tab.f[c][node];
      double sp = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        g += b[d] > 0.0 ? b[d] * pf[d] : b[d] * pb[d];
        sp += sg[d] * pc[d];
      }
      g += half_mu * sp * sp;
      double tr = 0.0;
      for (std::size_t d = 0; d < n; ++d) {
        for (std::size_t e = 0; e < n; ++e) tr += sg[d] * sg[e] * P[d * n + e];
        if (viscosity) {
          tr += 2.0 * half_mu * std::fabs(sg[d]) * std::fabs(sp) * L.dx[d] * P[d * n + d];
        }
      }
      g += 0.5 * tr;
      if (g < best) {
        best = g;
        best_idx = static_cast<std::int32_t>(c);
      }
    }
    out[node] = v0 + dt * best;
    if (policy) (*policy)[node] = best_idx;
  }
}

// Boundary nodes inherit the policy of the nearest interior node along each axis.
void fill_boundary_policy(const Layout& L, std::int32_t* pol) {
  for (std::size_t d = 0; d < L.n; ++d) {
    const std::size_t s = L.strides[d];
    for (std::size_t node = 0; node < L.total; ++node) {
      const std::size_t coord = (node / s) % L.sizes[d];
      if (coord == 0) pol[node] = pol[node + s];
      else if (coord + 1 == L.sizes[d]) pol[node] = pol[node - s];
    }
  }
}

}  // namespace

ValueGrid solve_hjb(const ProblemModel& model, const GridSpec& spec, const HjbOptions& options) {
  const std::size_t n = model.state_dim();
  if (spec.n_t < 2) throw ModelError("HJB grid needs n_t >= 2");
  std::vector<std::size_t> nx = spec.n_x.empty() ? std::vector<std::size_t>(n, 241) : spec.n_x;
  if (nx.size() != n) throw ModelError("HJB grid needs one n_x entry per state dimension");
  for (std::size_t v : nx) {
    if (v < 3) throw ModelError("HJB grid needs at least 3 nodes per dimension");
  }
  if (!(options.cfl_target > 0.0 && options.cfl_target <= 1.0)) {
    throw ModelError("cfl_target must lie in (0, 1]");
  }
  const Box box = spec.box ? *spec.box : model.domain();
  if (box.dim() != n) throw ModelError("HJB box dimension does not match the model");

  ValueGrid grid;
  for (std::size_t d = 0; d < n; ++d) grid.axes.push_back(uniform_axis(box.lower[d], box.upper[d], nx[d]));
  grid.t_nodes = uniform_axis(model.horizon().start, model.horizon().end, spec.n_t);
  const Layout L = make_layout(grid.axes);
  const std::size_t ns = L.total;
  const double half_mu = 0.5 * model.risk();
  const double interval = grid.t_nodes[1] - grid.t_nodes[0];

  CoefficientTable tab;
  double rate = 0.0;
  if (model.time_homogeneous()) {
    fill_coefficients(model, grid.axes, L, grid.t_nodes.back(), tab);
    rate = stability_rate(tab, L);
  } else {
    for (double t : grid.t_nodes) {
      fill_coefficients(model, grid.axes, L, t, tab);
      rate = std::max(rate, stability_rate(tab, L));
    }
  }

  std::vector<double> terminal(ns);
  {
    std::vector<double> x(n);
    for (std::size_t node = 0; node < ns; ++node) {
      std::size_t rem = node;
      for (std::size_t d = 0; d < n; ++d) {
        x[d] = grid.axes[d][rem / L.strides[d]];
        rem %= L.strides[d];
      }
      terminal[node] = model.terminal_cost(x);
    }
  }
  if (options.artificial_viscosity) {
    if (!model.time_homogeneous()) fill_coefficients(model, grid.axes, L, grid.t_nodes.back(), tab);
    rate += 1.5 * viscosity_rate(tab, L, terminal, half_mu);
  }

  auto substeps_for = [&](double r) -> std::size_t {
    const double m = std::ceil(interval * r / options.cfl_target);
    return std::max<std::size_t>(1, static_cast<std::size_t>(m));
  };
  std::size_t m = substeps_for(rate);
  const auto& kern = kernels::active();

  for (;;) {
    if (m * (spec.n_t - 1) > options.max_substeps) {
      std::ostringstream os;
      os << "HJB scheme needs " << m * (spec.n_t - 1) << " explicit steps to satisfy the "
         << "monotonicity bound (budget " << options.max_substeps
         << "); coarsen n_x, shrink the box or raise the step budget";
      throw CflError(os.str());
    }
    const double dt = interval / static_cast<double>(m);
    grid.V.assign(spec.n_t * ns, 0.0);
    grid.policy.assign(spec.n_t * ns, -1);
    std::vector<double> cur = terminal, next = terminal;
    std::vector<std::int32_t> pol(ns, 0);
    double observed = 0.0;
    bool restart = false;

    if (!model.time_homogeneous()) fill_coefficients(model, grid.axes, L, grid.t_nodes.back(), tab);
    auto run_step = [&](double step_dt) {
      if (n == 1) {
        std::vector<const double*> fp(tab.f.size()), bp(tab.f.size()), sp(tab.f.size());
        for (std::size_t c = 0; c < tab.f.size(); ++c) {
          fp[c] = tab.f[c].data();
          bp[c] = tab.b[c].data();
          sp[c] = tab.s2[c].data();
        }
        kernels::HjbLineArgs a;
        a.v = cur.data();
        a.v_out = next.data();
        a.policy_out = pol.data();
        a.n = ns;
        a.n_controls = tab.f.size();
        a.running_cost = fp.data();
        a.drift = bp.data();
        a.diffusion_sq = sp.data();
        a.dt = step_dt;
        a.dx = L.dx[0];
        a.half_mu = half_mu;
        a.viscosity = options.artificial_viscosity ? 1.0 : 0.0;
        kern.hjb_line(a);
      } else {
        step_nd(tab, L, cur, next, &pol, step_dt, half_mu, options.artificial_viscosity);
      }
    };

    // Policy at the terminal slice from the terminal data.
    run_step(0.0);
    fill_boundary_policy(L, pol.data());
    std::copy(cur.begin(), cur.end(), grid.V.begin() + (spec.n_t - 1) * ns);
    std::copy(pol.begin(), pol.end(), grid.policy.begin() + (spec.n_t - 1) * ns);

    const double base_rate = stability_rate(tab, L);
    for (std::size_t j = spec.n_t - 1; j-- > 0 && !restart;) {
      for (std::size_t sub = 0; sub < m; ++sub) {
        const double t_known = grid.t_nodes[j + 1] - static_cast<double>(sub) * dt;
        const double t_new = sub + 1 == m ? grid.t_nodes[j] : t_known - dt;
        double r = base_rate;
        if (!model.time_homogeneous()) {
          fill_coefficients(model, grid.axes, L, t_known, tab);
          r = stability_rate(tab, L);
        }
        if (options.artificial_viscosity) r += viscosity_rate(tab, L, cur, half_mu);
        observed = std::max(observed, r * dt);
        if (r * dt > 1.0) {
          restart = true;
          break;
        }
        run_step(dt);
        apply_boundary(model, grid.axes, L, options.boundary, t_new, next);
        for (double v : next) {
          if (!std::isfinite(v)) throw NonFiniteError("HJB solution became non-finite");
        }
        cur.swap(next);
      }
      if (restart) break;
      fill_boundary_policy(L, pol.data());
      std::copy(cur.begin(), cur.end(), grid.V.begin() + j * ns);
      std::copy(pol.begin(), pol.end(), grid.policy.begin() + j * ns);
    }
    if (restart) {
      m *= 2;
      continue;
    }
    grid.meta.dt = dt;
    grid.meta.dx = L.dx;
    grid.meta.cfl = observed;
    grid.meta.substeps = m;
    break;
  }
  grid.meta.boundary = to_string(options.boundary);
  grid.meta.artificial_viscosity = options.artificial_viscosity;
  grid.meta.note =
      "uniqueness of the viscosity solution is only known for small mu; not certified here";
  return grid;
}

ValueGrid tabulate_value_grid(const std::function<double(double t, double x)>& value,
                              const Horizon& horizon, std::size_t n_t,
                              const std::vector<double>& axis) {
  ValueGrid g;
  g.t_nodes = uniform_axis(horizon.start, horizon.end, n_t);
  g.axes = {axis};
  g.V.resize(n_t * axis.size());
  g.policy.assign(n_t * axis.size(), -1);
  for (std::size_t j = 0; j < n_t; ++j) {
    for (std::size_t i = 0; i < axis.size(); ++i) g.V[j * axis.size() + i] = value(g.t_nodes[j], axis[i]);
  }
  g.meta.dx = {axis.size() > 1 ? axis[1] - axis[0] : 0.0};
  g.meta.boundary = "closed_form";
  return g;
}

namespace {

double min_G(const ProblemModel& model, double t, double x, double p, double P) {
  double best = std::numeric_limits<double>::infinity();
  const StateView xv(&x, 1);
  for (std::size_t c = 0; c < model.controls().size(); ++c) {
    best = std::min(best, hamiltonian_G(model, t, xv, model.controls()[c],
                                        std::span<const double>(&p, 1),
                                        std::span<const double>(&P, 1)));
  }
  return best;
}

}  // namespace

std::vector<ResidualPoint> viscosity_residuals(const ValueGrid& grid, const ProblemModel& model,
                                               const std::vector<std::array<double, 2>>& points,
                                               const ResidualOptions& options) {
  if (grid.dim() != 1 || model.state_dim() != 1) {
    throw std::invalid_argument("viscosity_residuals supports one-dimensional grids only");
  }
  const auto& ax = grid.axes[0];
  const std::size_t nx = ax.size();
  if (nx < 8 || grid.t_nodes.size() < 2) throw std::invalid_argument("grid too small for residuals");
  const double dx = ax[1] - ax[0];

  std::vector<ResidualPoint> out;
  for (const auto& pt : points) {
    ResidualPoint r;
    const double t = pt[0], x = pt[1];
    std::size_t j = locate(grid.t_nodes, t).first;
    if (j + 1 >= grid.t_nodes.size()) j = grid.t_nodes.size() - 2;
    const auto [ci, cw] = locate(ax, x);
    const std::size_t i = cw > 0.5 ? ci + 1 : ci;
    if (i < 3 || i + 4 > nx) throw std::invalid_argument("residual point too close to the boundary");
    r.t = grid.t_nodes[j];
    r.x = ax[i];

    const double* v = grid.V.data() + j * nx;
    const double* vn = grid.V.data() + (j + 1) * nx;
    const double q = (vn[i] - v[i]) / (grid.t_nodes[j + 1] - grid.t_nodes[j]);
    auto slope_jump = [&](std::size_t k) {
      return std::fabs((v[k + 1] - v[k]) - (v[k] - v[k - 1])) / dx;
    };
    const double pf = (v[i + 1] - v[i]) / dx;
    const double pb = (v[i] - v[i - 1]) / dx;
    const double jump = slope_jump(i);
    const double neighbours = std::max(slope_jump(i - 3), slope_jump(i + 3));
    r.kink = jump > options.kink_ratio * neighbours + options.kink_floor;

    if (!r.kink) {
      const double pc = (v[i + 1] - v[i - 1]) / (2.0 * dx);
      const double P = ((v[i + 1] - v[i]) - (v[i] - v[i - 1])) / (dx * dx);
      r.smooth_residual = q + min_G(model, r.t, r.x, pc, P);
      r.sub_residual = -r.smooth_residual;
      r.super_residual = -r.smooth_residual;
    } else {
      r.smooth_residual = std::numeric_limits<double>::quiet_NaN();
      const double p_lo = std::min(pf, pb), p_hi = std::max(pf, pb);
      const double P_left = (v[i] - 2.0 * v[i - 1] + v[i - 2]) / (dx * dx);
      const double P_right = (v[i + 2] - 2.0 * v[i + 1] + v[i]) / (dx * dx);
      const bool concave = pf < pb;
      const std::size_t ns = std::max<std::size_t>(2, options.slope_samples);
      double agg = concave ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < ns; ++k) {
        const double p = p_lo + (p_hi - p_lo) * static_cast<double>(k) / static_cast<double>(ns - 1);
        for (double P : {P_left, P_right}) {
          CandidateResidual c{q, p, P, -q - min_G(model, r.t, r.x, p, P)};
          agg = concave ? std::max(agg, c.value) : std::min(agg, c.value);
          r.candidates.push_back(c);
        }
      }
      // Concave corner: smooth functions cannot touch from below, so the
      // subjet is empty and the supersolution test is vacuous (and vice versa).
      if (concave) {
        r.sub_residual = agg;
      } else {
        r.super_residual = agg;
      }
    }
    for (const auto& e : options.extra_candidates) {
      r.candidates.push_back(
          CandidateResidual{e[0], e[1], e[2], -e[0] - min_G(model, r.t, r.x, e[1], e[2])});
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rsc
