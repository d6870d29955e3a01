#include <doctest.h>

#include <stdexcept>

#include <cstring>
#include <vector>

#include "oracles.hpp"
#include "rsc/kernels.hpp"

using namespace rsc::kernels;

namespace {

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_bits(a[i], b[i])) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("isa names and forcing") {
  CHECK(isa_name(Isa::scalar) == "scalar");
  CHECK(cpu_supports(Isa::scalar));
  force_isa(Isa::scalar);
  CHECK(active().isa == Isa::scalar);
  if (cpu_supports(Isa::avx2)) {
    force_isa(Isa::avx2);
    CHECK(active().isa == Isa::avx2);
  } else {
    CHECK_THROWS_AS(force_isa(Isa::avx2), std::invalid_argument);
  }
}

#if defined(RSC_HAVE_AVX2_KERNELS)

TEST_CASE("dot, axpy and euler_step agree bitwise between scalar and avx2") {
  if (!cpu_supports(Isa::avx2)) return;
  oracle::Gen g(11);
  for (std::size_t n = 0; n < 70; ++n) {
    const auto a = g.vector(n, -3, 3), b = g.vector(n, -3, 3);
    CHECK(same_bits(scalar::dot(a.data(), b.data(), n), avx2::dot(a.data(), b.data(), n)));

    auto y1 = g.vector(n, -1, 1);
    auto y2 = y1;
    const double alpha = g.uniform(-2, 2);
    scalar::axpy(alpha, a.data(), y1.data(), n);
    avx2::axpy(alpha, a.data(), y2.data(), n);
    CHECK(same_bits(y1, y2));

    const auto x = g.vector(n, -2, 2), dw = g.vector(n, -0.1, 0.1);
    std::vector<double> o1(n), o2(n);
    const double dt = g.uniform(1e-4, 1e-1);
    scalar::euler_step(x.data(), a.data(), b.data(), dw.data(), dt, o1.data(), n);
    avx2::euler_step(x.data(), a.data(), b.data(), dw.data(), dt, o2.data(), n);
    CHECK(same_bits(o1, o2));
  }
}

TEST_CASE("hjb_line agrees bitwise between scalar and avx2") {
  if (!cpu_supports(Isa::avx2)) return;
  oracle::Gen g(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 3 + g.index(60);
    const std::size_t nc = 1 + g.index(4);
    const auto v = g.vector(n, -1, 1);
    std::vector<std::vector<double>> f(nc), b(nc), s2(nc);
    std::vector<const double*> fp(nc), bp(nc), sp(nc);
    for (std::size_t c = 0; c < nc; ++c) {
      f[c] = g.vector(n, 0, 1);
      b[c] = g.vector(n, -1, 1);
      s2[c] = g.vector(n, 0, 2);
      if (trial % 5 == 0) b[c].assign(n, 0.0);  // ties between controls
      fp[c] = f[c].data();
      bp[c] = b[c].data();
      sp[c] = s2[c].data();
    }
    std::vector<double> o1(v), o2(v);
    std::vector<std::int32_t> p1(n, -1), p2(n, -1);
    HjbLineArgs args;
    args.v = v.data();
    args.n = n;
    args.n_controls = nc;
    args.running_cost = fp.data();
    args.drift = bp.data();
    args.diffusion_sq = sp.data();
    args.dt = g.uniform(1e-6, 1e-4);
    args.dx = g.uniform(0.01, 0.1);
    args.half_mu = g.uniform(0, 2);
    args.viscosity = trial % 2;
    args.v_out = o1.data();
    args.policy_out = p1.data();
    scalar::hjb_line(args);
    args.v_out = o2.data();
    args.policy_out = p2.data();
    avx2::hjb_line(args);
    CHECK(same_bits(o1, o2));
    CHECK(p1 == p2);
  }
}

TEST_CASE("max_taylor_excess agrees bitwise between scalar and avx2") {
  if (!cpu_supports(Isa::avx2)) return;
  oracle::Gen g(13);
  for (std::size_t n = 1; n < 90; ++n) {
    const auto dv = g.vector(n, -1, 1), dt = g.vector(n, 0, 0.01), dx = g.vector(n, -0.1, 0.1);
    const double st = g.uniform(-1, 1), sx = g.uniform(-1, 1), hc = g.uniform(-1, 1);
    for (double sign : {1.0, -1.0}) {
      CHECK(same_bits(scalar::max_taylor_excess(dv.data(), dt.data(), dx.data(), n, st, sx, hc, sign),
                      avx2::max_taylor_excess(dv.data(), dt.data(), dx.data(), n, st, sx, hc, sign)));
      CHECK(same_bits(scalar::max_taylor_excess(dv.data(), nullptr, dx.data(), n, st, sx, hc, sign),
                      avx2::max_taylor_excess(dv.data(), nullptr, dx.data(), n, st, sx, hc, sign)));
    }
  }
}

#endif

TEST_CASE("scalar kernels against direct loops") {
  const std::vector<double> a = {1, 2, 3, 4, 5}, b = {2, 2, 2, 2, 2};
  CHECK(scalar::dot(a.data(), b.data(), 5) == 30.0);
  const std::vector<double> dv = {0.0, 1.0, -1.0}, dx = {0.0, 1.0, -1.0};
  // dv - slope*dx - half_curv*dx^2 with slope 1, half_curv -1 gives {0, 1, 1}.
  CHECK(scalar::max_taylor_excess(dv.data(), nullptr, dx.data(), 3, 0.0, 1.0, -1.0, 1.0) == 1.0);
  CHECK(scalar::max_taylor_excess(dv.data(), nullptr, dx.data(), 3, 0.0, 1.0, -1.0, -1.0) == 0.0);
}
