#include <immintrin.h>

#include <cmath>
#include <limits>
#include <vector>

#include "rsc/kernels.hpp"

// Compiled with -mavx2 only (no -mfma): every lane performs the same IEEE
// operations in the same order as the scalar reference.

namespace rsc::kernels::avx2 {

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    acc = _mm256_add_pd(acc, prod);
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, acc);
  double sum = (lane[0] + lane[1]) + (lane[2] + lane[3]);
  for (; i < n; ++i) {
    const double prod = a[i] * b[i];
    sum = sum + prod;
  }
  return sum;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) {
    const double prod = a * x[i];
    y[i] = y[i] + prod;
  }
}

void euler_step(const double* x, const double* drift, const double* diffusion, const double* dw,
                double dt, double* x_out, std::size_t n) {
  const __m256d vdt = _mm256_set1_pd(dt);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d db = _mm256_mul_pd(_mm256_loadu_pd(drift + i), vdt);
    const __m256d ds = _mm256_mul_pd(_mm256_loadu_pd(diffusion + i), _mm256_loadu_pd(dw + i));
    _mm256_storeu_pd(x_out + i, _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(x + i), db), ds));
  }
  for (; i < n; ++i) {
    const double db = drift[i] * dt;
    const double ds = diffusion[i] * dw[i];
    x_out[i] = (x[i] + db) + ds;
  }
}

namespace {

inline __m256d abs_pd(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

}  // namespace

void hjb_line(const HjbLineArgs& a) {
  if (a.n < 3) return;
  const double inv_dx = 1.0 / a.dx;
  const double inv_2dx = 0.5 / a.dx;
  const double inv_dx2 = 1.0 / (a.dx * a.dx);
  const __m256d v_inv_dx = _mm256_set1_pd(inv_dx);
  const __m256d v_inv_2dx = _mm256_set1_pd(inv_2dx);
  const __m256d v_inv_dx2 = _mm256_set1_pd(inv_dx2);
  const __m256d v_half_mu = _mm256_set1_pd(a.half_mu);
  const __m256d v_half = _mm256_set1_pd(0.5);
  const __m256d v_visc = _mm256_set1_pd(a.viscosity);
  const __m256d v_dx = _mm256_set1_pd(a.dx);
  const __m256d v_dt = _mm256_set1_pd(a.dt);
  const __m256d v_zero = _mm256_setzero_pd();

  std::size_t i = 1;
  for (; i + 4 < a.n; i += 4) {
    const __m256d vm = _mm256_loadu_pd(a.v + i - 1);
    const __m256d v0 = _mm256_loadu_pd(a.v + i);
    const __m256d vp = _mm256_loadu_pd(a.v + i + 1);
    const __m256d fwd = _mm256_sub_pd(vp, v0);
    const __m256d bwd = _mm256_sub_pd(v0, vm);
    const __m256d pc = _mm256_mul_pd(_mm256_sub_pd(vp, vm), v_inv_2dx);
    const __m256d pf = _mm256_mul_pd(fwd, v_inv_dx);
    const __m256d pb = _mm256_mul_pd(bwd, v_inv_dx);
    const __m256d second = _mm256_mul_pd(_mm256_sub_pd(fwd, bwd), v_inv_dx2);
    const __m256d abs_pc = abs_pd(pc);

    __m256d best = _mm256_set1_pd(std::numeric_limits<double>::infinity());
    __m256d best_idx = v_zero;
    for (std::size_t c = 0; c < a.n_controls; ++c) {
      const __m256d f = _mm256_loadu_pd(a.running_cost[c] + i);
      const __m256d b = _mm256_loadu_pd(a.drift[c] + i);
      const __m256d s2 = _mm256_loadu_pd(a.diffusion_sq[c] + i);
      const __m256d upwind_mask = _mm256_cmp_pd(b, v_zero, _CMP_GT_OQ);
      const __m256d drift_term =
          _mm256_blendv_pd(_mm256_mul_pd(b, pb), _mm256_mul_pd(b, pf), upwind_mask);
      const __m256d t1 = _mm256_mul_pd(s2, pc);
      const __m256d t2 = _mm256_mul_pd(t1, pc);
      const __m256d grad_term = _mm256_mul_pd(v_half_mu, t2);
      const __m256d av1 = _mm256_mul_pd(v_half_mu, s2);
      const __m256d av2 = _mm256_mul_pd(av1, abs_pc);
      const __m256d av3 = _mm256_mul_pd(av2, v_dx);
      const __m256d nu = _mm256_add_pd(_mm256_mul_pd(v_half, s2), _mm256_mul_pd(v_visc, av3));
      const __m256d g = _mm256_add_pd(_mm256_add_pd(_mm256_add_pd(f, drift_term), grad_term),
                                      _mm256_mul_pd(nu, second));
      const __m256d better = _mm256_cmp_pd(g, best, _CMP_LT_OQ);
      best = _mm256_blendv_pd(best, g, better);
      best_idx = _mm256_blendv_pd(best_idx, _mm256_set1_pd(static_cast<double>(c)), better);
    }
    _mm256_storeu_pd(a.v_out + i, _mm256_add_pd(v0, _mm256_mul_pd(v_dt, best)));
    if (a.policy_out != nullptr) {
      const __m128i idx = _mm256_cvttpd_epi32(best_idx);
      _mm_storeu_si128(reinterpret_cast<__m128i*>(a.policy_out + i), idx);
    }
  }

  if (i + 1 < a.n) {
    // Remainder through the scalar reference on a window starting at node i-1.
    std::vector<const double*> f(a.n_controls), b(a.n_controls), s(a.n_controls);
    for (std::size_t c = 0; c < a.n_controls; ++c) {
      f[c] = a.running_cost[c] + i - 1;
      b[c] = a.drift[c] + i - 1;
      s[c] = a.diffusion_sq[c] + i - 1;
    }
    HjbLineArgs tail = a;
    tail.v = a.v + i - 1;
    tail.v_out = a.v_out + i - 1;
    tail.policy_out = a.policy_out != nullptr ? a.policy_out + i - 1 : nullptr;
    tail.n = a.n - i + 1;
    tail.running_cost = f.data();
    tail.drift = b.data();
    tail.diffusion_sq = s.data();
    scalar::hjb_line(tail);
  }
}

double max_taylor_excess(const double* dv, const double* dt, const double* dx, std::size_t n,
                         double slope_t, double slope_x, double half_curv, double sign) {
  const __m256d v_sx = _mm256_set1_pd(slope_x);
  const __m256d v_st = _mm256_set1_pd(slope_t);
  const __m256d v_hc = _mm256_set1_pd(half_curv);
  const __m256d v_sign = _mm256_set1_pd(sign);
  __m256d best = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d x = _mm256_loadu_pd(dx + i);
    const __m256d lin = _mm256_mul_pd(v_sx, x);
    const __m256d quad = _mm256_mul_pd(_mm256_mul_pd(v_hc, x), x);
    __m256d e = _mm256_sub_pd(_mm256_loadu_pd(dv + i), lin);
    if (dt != nullptr) e = _mm256_sub_pd(e, _mm256_mul_pd(v_st, _mm256_loadu_pd(dt + i)));
    e = _mm256_sub_pd(e, quad);
    e = _mm256_mul_pd(v_sign, e);
    best = _mm256_max_pd(e, best);
  }
  alignas(32) double lane[4];
  _mm256_store_pd(lane, best);
  double result = lane[0];
  for (int l = 1; l < 4; ++l) result = lane[l] > result ? lane[l] : result;
  if (i < n) {
    const double rest = scalar::max_taylor_excess(dv + i, dt != nullptr ? dt + i : nullptr, dx + i,
                                                  n - i, slope_t, slope_x, half_curv, sign);
    result = rest > result ? rest : result;
  }
  return result;
}

const KernelTable& table() {
  static const KernelTable t{Isa::avx2, &dot, &axpy, &euler_step, &hjb_line, &max_taylor_excess};
  return t;
}

}  // namespace rsc::kernels::avx2
