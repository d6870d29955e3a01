#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "rsc/kernels.hpp"

namespace rsc::kernels {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(RSC_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

namespace {

const KernelTable& table_for(Isa isa) {
#if defined(RSC_HAVE_AVX2_KERNELS)
  if (isa == Isa::avx2) return avx2::table();
#endif
  (void)isa;
  return scalar::table();
}

const KernelTable* detect() {
  const char* env = std::getenv("RSC_SIMD");
  if (env != nullptr && std::strcmp(env, "scalar") == 0) return &scalar::table();
  if (cpu_supports(Isa::avx2)) return &table_for(Isa::avx2);
  return &scalar::table();
}

const KernelTable*& current() {
  static const KernelTable* table = detect();
  return table;
}

}  // namespace

const KernelTable& active() { return *current(); }

void force_isa(Isa isa) {
  if (!cpu_supports(isa)) {
    throw std::invalid_argument("kernels: CPU does not support " + std::string(isa_name(isa)));
  }
  current() = &table_for(isa);
}

}  // namespace rsc::kernels
