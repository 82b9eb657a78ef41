#include <atomic>

#include "sdelab/errors.hpp"
#include "sdelab/kernels.hpp"

namespace sdelab::kernels {
namespace {

Isa detect() noexcept {
#if defined(SDELAB_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2")) return Isa::Avx2;
#endif
#if defined(SDELAB_HAVE_NEON)
  return Isa::Neon;
#endif
  return Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

const char* isa_name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar: return true;
    case Isa::Avx2:
#if defined(SDELAB_HAVE_AVX2)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(SDELAB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() noexcept { return current().load(); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) throw ArgumentError(std::string("kernel ISA not available: ") + isa_name(isa));
  current().store(isa);
}

const KernelTable& table(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return detail::scalar_table;
#if defined(SDELAB_HAVE_AVX2)
    case Isa::Avx2:
      if (isa_available(isa)) return detail::avx2_table;
      break;
#endif
#if defined(SDELAB_HAVE_NEON)
    case Isa::Neon: return detail::neon_table;
#endif
    default: break;
  }
  throw ArgumentError(std::string("kernel ISA not available: ") + isa_name(isa));
}

const KernelTable& active() { return table(active_isa()); }

}  // namespace sdelab::kernels
