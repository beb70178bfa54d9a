#include <immintrin.h>

#include <algorithm>

#include "kernels_impl.hpp"

namespace lasforge::kernels::detail {

namespace {

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n) {
  const std::size_t n16 = n - n % 16;
  const std::size_t n4 = n - n % 4;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j < n16; j += 16) {
      __m256d acc0 = _mm256_setzero_pd();
      __m256d acc1 = _mm256_setzero_pd();
      __m256d acc2 = _mm256_setzero_pd();
      __m256d acc3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(arow[p]);
        const double* bp = b + p * n + j;
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(av, _mm256_loadu_pd(bp)));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(av, _mm256_loadu_pd(bp + 4)));
        acc2 = _mm256_add_pd(acc2, _mm256_mul_pd(av, _mm256_loadu_pd(bp + 8)));
        acc3 = _mm256_add_pd(acc3, _mm256_mul_pd(av, _mm256_loadu_pd(bp + 12)));
      }
      _mm256_storeu_pd(crow + j, acc0);
      _mm256_storeu_pd(crow + j + 4, acc1);
      _mm256_storeu_pd(crow + j + 8, acc2);
      _mm256_storeu_pd(crow + j + 12, acc3);
    }
    for (; j < n4; j += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_add_pd(acc,
                            _mm256_mul_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        acc = acc + arow[p] * b[p * n + j];
      }
      crow[j] = acc;
    }
  }
}

void gemm_tn_acc_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                      std::size_t n) {
  const std::size_t n4 = n - n % 4;
  for (std::size_t p = 0; p < k; ++p) {
    double* crow = c + p * n;
    std::size_t j = 0;
    for (; j < n4; j += 4) {
      __m256d acc = _mm256_loadu_pd(crow + j);
      for (std::size_t i = 0; i < m; ++i) {
        acc = _mm256_add_pd(
            acc, _mm256_mul_pd(_mm256_set1_pd(a[i * k + p]), _mm256_loadu_pd(b + i * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = crow[j];
      for (std::size_t i = 0; i < m; ++i) {
        acc = acc + a[i * k + p] * b[i * n + j];
      }
      crow[j] = acc;
    }
  }
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(alpha);
  const std::size_t n4 = n - n % 4;
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d yv = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void pgd_step_avx2(const double* x, const double* grad, double* delta, std::size_t d, double step,
                   double radius) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d stepv = _mm256_set1_pd(step);
  const __m256d neg_radius = _mm256_set1_pd(-radius);
  const __m256d pos_radius = _mm256_set1_pd(radius);
  const std::size_t d4 = d - d % 4;
  std::size_t j = 0;
  for (; j < d4; j += 4) {
    const __m256d g = _mm256_loadu_pd(grad + j);
    const __m256d xv = _mm256_loadu_pd(x + j);
    const __m256d pos = _mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_GT_OQ), one);
    const __m256d neg = _mm256_and_pd(_mm256_cmp_pd(g, zero, _CMP_LT_OQ), one);
    const __m256d s = _mm256_sub_pd(pos, neg);
    const __m256d lo = _mm256_max_pd(neg_radius, _mm256_sub_pd(zero, xv));
    const __m256d hi = _mm256_min_pd(pos_radius, _mm256_sub_pd(one, xv));
    const __m256d moved = _mm256_add_pd(_mm256_loadu_pd(delta + j), _mm256_mul_pd(stepv, s));
    _mm256_storeu_pd(delta + j, _mm256_min_pd(_mm256_max_pd(moved, lo), hi));
  }
  for (; j < d; ++j) {
    const double s = (grad[j] > 0.0 ? 1.0 : 0.0) - (grad[j] < 0.0 ? 1.0 : 0.0);
    const double lo = std::max(-radius, -x[j]);
    const double hi = std::min(radius, 1.0 - x[j]);
    const double moved = delta[j] + step * s;
    delta[j] = std::min(std::max(moved, lo), hi);
  }
}

}  // namespace

const KernelTable kAvx2Table{
    "avx2", gemm_nn_avx2, gemm_tn_acc_avx2, axpy_avx2, pgd_step_avx2,
};

}  // namespace lasforge::kernels::detail
