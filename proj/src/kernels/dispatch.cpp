#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "kernels_impl.hpp"

namespace lasforge::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& choose() {
  const char* env = std::getenv("LASFORGE_KERNEL");
  const std::string wanted = env ? env : "auto";
  if (wanted == "scalar") {
    return scalar_kernels();
  }
  const KernelTable* simd = avx2_kernels();
  if (wanted == "avx2") {
    if (!simd) {
      throw std::runtime_error("LASFORGE_KERNEL=avx2 requested but AVX2 is unavailable");
    }
    return *simd;
  }
  if (wanted != "auto") {
    throw std::runtime_error("unknown LASFORGE_KERNEL value '" + wanted + "'");
  }
  return simd ? *simd : scalar_kernels();
}

}  // namespace

const KernelTable& scalar_kernels() { return detail::kScalarTable; }

const KernelTable* avx2_kernels() {
#if LASFORGE_WITH_AVX2
  static const bool supported = cpu_has_avx2();
  return supported ? &detail::kAvx2Table : nullptr;
#else
  return nullptr;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = choose();
  return table;
}

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  active().gemm_nn(a.data(), b.data(), c.data(), m, k, n);
}

void gemm_tn_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                 std::size_t m, std::size_t k, std::size_t n) {
  active().gemm_tn_acc(a.data(), b.data(), c.data(), m, k, n);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t p = 0; p < k; ++p) {
      bt[p * n + j] = b[j * k + p];
    }
  }
  active().gemm_nn(a.data(), bt.data(), c.data(), m, k, n);
}

}  // namespace lasforge::kernels
