#pragma once

// Dense inner-loop kernels. Every variant evaluates each output element with
// the same sequence of multiplies and adds as the scalar reference, so the
// SIMD paths are bit-identical to it (no FMA, fixed accumulation order).

#include <cstddef>
#include <span>
#include <string_view>

namespace lasforge::kernels {

struct KernelTable {
  std::string_view name;

  // c[m,n] = a[m,k] * b[k,n]; c is overwritten.
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n);

  // c[k,n] += a[m,k]^T * b[m,n]
  void (*gemm_tn_acc)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n);

  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // One projected sign step on a single sample of width d:
  //   delta = clamp(delta + step * sign(grad), max(-radius, -x), min(radius, 1 - x))
  // sign(0) == 0.
  void (*pgd_step)(const double* x, const double* grad, double* delta, std::size_t d, double step,
                   double radius);
};

const KernelTable& scalar_kernels();

// nullptr when the build or the running CPU lacks AVX2.
const KernelTable* avx2_kernels();

// Selected once per process: LASFORGE_KERNEL=scalar|avx2|auto (default auto).
const KernelTable& active();

// Convenience wrappers over the active table.
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// c[m,n] = a[m,k] * b[n,k]^T, via an explicit transpose of b and gemm_nn.
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

}  // namespace lasforge::kernels
