#include <atomic>
#include <cstdlib>
#include <string>

#include "mea/errors.hpp"
#include "mea/simd/kernels.hpp"

namespace mea::simd {
namespace {

constexpr KernelTable kScalarTable{Backend::kScalar, &scalar::dot, &scalar::axpy,
                                   &scalar::scale_add};
constexpr KernelTable kAvx2Table{Backend::kAvx2, &avx2::dot, &avx2::axpy, &avx2::scale_add};
constexpr KernelTable kNeonTable{Backend::kNeon, &neon::dot, &neon::axpy, &neon::scale_add};

Backend detect_best() {
  if (backend_supported(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_supported(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend initial_backend() {
  if (const char* env = std::getenv("MEA_SIMD"); env != nullptr && *env != '\0') {
    Backend requested = parse_backend(env);
    if (backend_supported(requested)) return requested;
  }
  return detect_best();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table_for(initial_backend())};
  return slot;
}

}  // namespace

bool backend_supported(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
#if defined(MEA_HAVE_AVX2) && (defined(__x86_64__) || defined(__i386__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::kNeon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table_for(Backend backend) {
  switch (backend) {
    case Backend::kAvx2:
      return kAvx2Table;
    case Backend::kNeon:
      return kNeonTable;
    case Backend::kScalar:
      break;
  }
  return kScalarTable;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_acquire); }

void select_backend(Backend backend) {
  if (!backend_supported(backend)) {
    throw ConfigError("SIMD backend '" + std::string(backend_name(backend)) +
                      "' is not supported on this CPU");
  }
  active_slot().store(&table_for(backend), std::memory_order_release);
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "scalar";
}

Backend parse_backend(std::string_view name) {
  if (name == "scalar") return Backend::kScalar;
  if (name == "avx2") return Backend::kAvx2;
  if (name == "neon") return Backend::kNeon;
  throw ConfigError("unknown SIMD backend '" + std::string(name) + "'");
}

}  // namespace mea::simd
