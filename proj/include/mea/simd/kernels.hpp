#pragma once

// Dense double-precision vector kernels used by the layer math.
//
// Every kernel has a scalar reference implementation plus optional AVX2
// (x86-64) and NEON (aarch64) variants. The active table is chosen once at
// first use from the CPU's capabilities, or from the MEA_SIMD environment
// variable ("scalar", "avx2", "neon"). Elementwise kernels are bit-identical
// across backends; reductions (dot) differ only by summation order.

#include <cstddef>
#include <span>
#include <string_view>

namespace mea::simd {

enum class Backend { kScalar, kAvx2, kNeon };

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * y[i] + x[i]
  void (*scale_add)(double alpha, const double* x, double* y, std::size_t n);
};

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

namespace neon {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void scale_add(double alpha, const double* x, double* y, std::size_t n);
}  // namespace neon

bool backend_supported(Backend backend);
const KernelTable& table_for(Backend backend);

// The table in effect for this process.
const KernelTable& active();
// Overrides the process-wide selection; throws if the CPU lacks support.
void select_backend(Backend backend);

std::string_view backend_name(Backend backend);
Backend parse_backend(std::string_view name);

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline void scale_add(double alpha, std::span<const double> x, std::span<double> y) {
  active().scale_add(alpha, x.data(), y.data(), x.size());
}

}  // namespace mea::simd
