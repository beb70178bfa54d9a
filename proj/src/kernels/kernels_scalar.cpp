#include <algorithm>

#include "kernels_impl.hpp"

namespace lasforge::kernels::detail {

namespace {

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] = crow[j] + aip * brow[j];
      }
    }
  }
}

void gemm_tn_acc_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                        std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] = crow[j] + aip * brow[j];
      }
    }
  }
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = y[i] + alpha * x[i];
  }
}

void pgd_step_scalar(const double* x, const double* grad, double* delta, std::size_t d,
                     double step, double radius) {
  for (std::size_t j = 0; j < d; ++j) {
    const double s = (grad[j] > 0.0 ? 1.0 : 0.0) - (grad[j] < 0.0 ? 1.0 : 0.0);
    const double lo = std::max(-radius, -x[j]);
    const double hi = std::min(radius, 1.0 - x[j]);
    const double moved = delta[j] + step * s;
    delta[j] = std::min(std::max(moved, lo), hi);
  }
}

}  // namespace

const KernelTable kScalarTable{
    "scalar", gemm_nn_scalar, gemm_tn_acc_scalar, axpy_scalar, pgd_step_scalar,
};

}  // namespace lasforge::kernels::detail
