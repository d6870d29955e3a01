#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference version and,
// on x86-64, an AVX2 version selected at runtime. The scalar versions fix the
// evaluation order (4-lane strided accumulation for reductions) so the AVX2
// versions reproduce them bit for bit.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace rsc::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

// One explicit time step of the 1-D HJB stencil over nodes [1, n-1).
struct HjbLineArgs {
  const double* v = nullptr;  // current slice, n nodes
  double* v_out = nullptr;    // next slice; boundary nodes untouched
  std::int32_t* policy_out = nullptr;
  std::size_t n = 0;
  std::size_t n_controls = 0;
  const double* const* running_cost = nullptr;  // [control][node]
  const double* const* drift = nullptr;
  const double* const* diffusion_sq = nullptr;  // sigma^2
  double dt = 0.0;
  double dx = 0.0;
  double half_mu = 0.0;
  // 1 adds the artificial viscosity half_mu*sigma^2*|p|*dx to the diffusion coefficient.
  double viscosity = 0.0;
};

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // x_out = x + drift*dt + diffusion*dw
  void (*euler_step)(const double* x, const double* drift, const double* diffusion,
                     const double* dw, double dt, double* x_out, std::size_t n);
  void (*hjb_line)(const HjbLineArgs& args);
  // max_i sign*(dv_i - slope_t*dt_i - slope_x*dx_i - half_curv*dx_i^2); dt may be null.
  double (*max_taylor_excess)(const double* dv, const double* dt, const double* dx,
                              std::size_t n, double slope_t, double slope_x,
                              double half_curv, double sign);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void euler_step(const double* x, const double* drift, const double* diffusion, const double* dw,
                double dt, double* x_out, std::size_t n);
void hjb_line(const HjbLineArgs& args);
double max_taylor_excess(const double* dv, const double* dt, const double* dx, std::size_t n,
                         double slope_t, double slope_x, double half_curv, double sign);
const KernelTable& table();
}  // namespace scalar

#if defined(RSC_HAVE_AVX2_KERNELS)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void euler_step(const double* x, const double* drift, const double* diffusion, const double* dw,
                double dt, double* x_out, std::size_t n);
void hjb_line(const HjbLineArgs& args);
double max_taylor_excess(const double* dv, const double* dt, const double* dx, std::size_t n,
                         double slope_t, double slope_x, double half_curv, double sign);
const KernelTable& table();
}  // namespace avx2
#endif

bool cpu_supports(Isa isa);

// Best supported table, unless RSC_SIMD=scalar is set in the environment.
const KernelTable& active();

// Overrides the runtime choice; throws std::invalid_argument if the CPU lacks the ISA.
void force_isa(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}

}  // namespace rsc::kernels
