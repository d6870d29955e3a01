#include "rsc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rsc::kernels::scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double lane[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (std::size_t l = 0; l < 4; ++l) {
      const double prod = a[i + l] * b[i + l];
      lane[l] = lane[l] + prod;
    }
  }
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    const double prod = a[i] * b[i];
    sum = sum + prod;
  }
  return sum;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double prod = a * x[i];
    y[i] = y[i] + prod;
  }
}

void euler_step(const double* x, const double* drift, const double* diffusion, const double* dw,
                double dt, double* x_out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const double db = drift[i] * dt;
    const double ds = diffusion[i] * dw[i];
    x_out[i] = (x[i] + db) + ds;
  }
}

void hjb_line(const HjbLineArgs& a) {
  const double inv_dx = 1.0 / a.dx;
  const double inv_2dx = 0.5 / a.dx;
  const double inv_dx2 = 1.0 / (a.dx * a.dx);
  for (std::size_t i = 1; i + 1 < a.n; ++i) {
    const double vm = a.v[i - 1];
    const double v0 = a.v[i];
    const double vp = a.v[i + 1];
    const double pc = (vp - vm) * inv_2dx;
    const double pf = (vp - v0) * inv_dx;
    const double pb = (v0 - vm) * inv_dx;
    const double second = ((vp - v0) - (v0 - vm)) * inv_dx2;
    const double abs_pc = std::fabs(pc);

    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_idx = 0;
    for (std::size_t c = 0; c < a.n_controls; ++c) {
      const double f = a.running_cost[c][i];
      const double b = a.drift[c][i];
      const double s2 = a.diffusion_sq[c][i];
      const double drift_term = b > 0.0 ? b * pf : b * pb;
      const double t1 = s2 * pc;
      const double t2 = t1 * pc;
      const double grad_term = a.half_mu * t2;
      const double av1 = a.half_mu * s2;
      const double av2 = av1 * abs_pc;
      const double av3 = av2 * a.dx;
      const double nu = 0.5 * s2 + a.viscosity * av3;
      const double g = ((f + drift_term) + grad_term) + nu * second;
      if (g < best) {
        best = g;
        best_idx = static_cast<std::int32_t>(c);
      }
    }
    a.v_out[i] = v0 + a.dt * best;
    if (a.policy_out != nullptr) a.policy_out[i] = best_idx;
  }
}

double max_taylor_excess(const double* dv, const double* dt, const double* dx, std::size_t n,
                         double slope_t, double slope_x, double half_curv, double sign) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double lin = slope_x * dx[i];
    const double quad0 = half_curv * dx[i];
    const double quad = quad0 * dx[i];
    double e = dv[i] - lin;
    if (dt != nullptr) {
      const double tt = slope_t * dt[i];
      e = e - tt;
    }
    e = e - quad;
    e = sign * e;
    best = e > best ? e : best;
  }
  return best;
}

const KernelTable& table() {
  static const KernelTable t{Isa::scalar, &dot, &axpy, &euler_step, &hjb_line, &max_taylor_excess};
  return t;
}

}  // namespace rsc::kernels::scalar
