#pragma once

// Data-parallel arithmetic kernels with a portable scalar reference and
// vectorized variants (AVX2+FMA on x86-64, NEON on AArch64). The variant is
// picked once at startup from CPU features; `DCLONE_SIMD=scalar|avx2|neon`
// overrides the choice.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace dclone::kernels {

enum class Isa { kScalar, kAvx2, kNeon };

enum class Trans { kNo, kYes };

using DotF32 = float (*)(const float* a, const float* b, std::size_t n);
using AxpyF32 = void (*)(float alpha, const float* x, float* y, std::size_t n);
using ScaleF32 = void (*)(float alpha, float* x, std::size_t n);
using ReluF32 = void (*)(float* x, std::size_t n);
using ReluBackwardF32 = void (*)(const float* activation, float* grad, std::size_t n);
// Row-major C(m x n) = alpha * op(A)(m x k) * op(B)(k x n) + beta * C.
using GemmF32 = void (*)(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k,
                         float alpha, const float* a, std::size_t lda, const float* b,
                         std::size_t ldb, float beta, float* c, std::size_t ldc);
using DotF64 = double (*)(const double* a, const double* b, std::size_t n);
using AxpyF64 = void (*)(double alpha, const double* x, double* y, std::size_t n);
using L2SqF64 = double (*)(const double* a, const double* b, std::size_t n);

struct KernelTable {
  Isa isa;
  DotF32 dot_f32;
  AxpyF32 axpy_f32;
  ScaleF32 scale_f32;
  ReluF32 relu_f32;
  ReluBackwardF32 relu_backward_f32;
  GemmF32 gemm_f32;
  DotF64 dot_f64;
  AxpyF64 axpy_f64;
  L2SqF64 l2sq_f64;
};

std::string_view isa_name(Isa isa);

// True when the variant is compiled in and the running CPU supports it.
bool supported(Isa isa);
std::vector<Isa> supported_isas();

// Table for a specific variant; throws if unsupported.
const KernelTable& table(Isa isa);

// Table used by the rest of the library.
const KernelTable& active();
void set_active(Isa isa);

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active().dot_f32(a.data(), b.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot_f64(a.data(), b.data(), a.size());
}
inline void axpy(float alpha, std::span<const float> x, std::span<float> y) {
  active().axpy_f32(alpha, x.data(), y.data(), x.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy_f64(alpha, x.data(), y.data(), x.size());
}
inline void scale(float alpha, std::span<float> x) {
  active().scale_f32(alpha, x.data(), x.size());
}
inline double l2_squared(std::span<const double> a, std::span<const double> b) {
  return active().l2sq_f64(a.data(), b.data(), a.size());
}
inline void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
                 const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
                 float* c, std::size_t ldc) {
  active().gemm_f32(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace dclone::kernels
