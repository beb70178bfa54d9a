#include <doctest.h>

#include <cstring>
#include <vector>

#include "lasforge/kernels.hpp"
#include "lasforge/rng.hpp"

namespace k = lasforge::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, lasforge::Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// Textbook triple loop; p is the innermost reduction, summed left to right.
std::vector<double> naive_gemm(const std::vector<double>& a, const std::vector<double>& b, std::size_t m,
                               std::size_t kk, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < kk; ++p) s = s + a[i * kk + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

const std::size_t kSizes[] = {1, 2, 3, 4, 5, 7, 8, 15, 16, 17, 31, 33, 64};

}  // namespace

TEST_CASE("scalar gemm matches the textbook triple loop exactly") {
  lasforge::Rng rng(1);
  for (std::size_t m : {1, 3, 8}) {
    for (std::size_t kk : kSizes) {
      for (std::size_t n : {1, 5, 16, 19}) {
        const auto a = random_vec(m * kk, rng);
        const auto b = random_vec(kk * n, rng);
        std::vector<double> c(m * n, 99.0);
        k::scalar_kernels().gemm_nn(a.data(), b.data(), c.data(), m, kk, n);
        CHECK(bits_equal(c, naive_gemm(a, b, m, kk, n)));
      }
    }
  }
}

TEST_CASE("gemm_tn_acc accumulates the transpose product") {
  lasforge::Rng rng(2);
  const std::size_t m = 6, kk = 5, n = 7;
  const auto a = random_vec(m * kk, rng);
  const auto b = random_vec(m * n, rng);
  std::vector<double> c = random_vec(kk * n, rng);
  const std::vector<double> c0 = c;
  k::scalar_kernels().gemm_tn_acc(a.data(), b.data(), c.data(), m, kk, n);
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * kk + p] * b[i * n + j];
      CHECK(c[p * n + j] == doctest::Approx(c0[p * n + j] + s).epsilon(1e-13));
    }
}

TEST_CASE("gemm_nt equals gemm_nn against an explicit transpose") {
  lasforge::Rng rng(3);
  const std::size_t m = 4, kk = 9, n = 6;
  const auto a = random_vec(m * kk, rng);
  const auto b = random_vec(n * kk, rng);
  std::vector<double> bt(kk * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < kk; ++p) bt[p * n + j] = b[j * kk + p];
  std::vector<double> c(m * n);
  k::gemm_nt(a, b, c, m, kk, n);
  CHECK(bits_equal(c, naive_gemm(a, bt, m, kk, n)));
}

TEST_CASE("pgd_step follows the projected sign rule") {
  const std::vector<double> x{0.0, 1.0, 0.5, 0.5, 0.995, 0.2};
  const std::vector<double> g{-1.0, 2.0, 0.0, 3.0, 1.0, -1e-300};
  std::vector<double> delta(6, 0.0);
  const double step = 0.01, r = 0.02;
  k::scalar_kernels().pgd_step(x.data(), g.data(), delta.data(), 6, step, r);
  CHECK(delta[0] == 0.0);          // pushed below the box
  CHECK(delta[1] == 0.0);          // pushed above the box
  CHECK(delta[2] == 0.0);          // sign(0) == 0
  CHECK(delta[3] == step);
  CHECK(delta[4] == doctest::Approx(0.005).epsilon(1e-12));  // x + delta == 1
  CHECK(delta[5] == -step);
  k::scalar_kernels().pgd_step(x.data(), g.data(), delta.data(), 6, step, r);
  k::scalar_kernels().pgd_step(x.data(), g.data(), delta.data(), 6, step, r);
  CHECK(delta[3] == r);  // stopped at the ball
}

TEST_CASE("avx2 kernels are bit-identical to the scalar reference") {
  const k::KernelTable* simd = k::avx2_kernels();
  if (!simd) {
    MESSAGE("avx2 kernels unavailable on this machine; equivalence not exercised");
    return;
  }
  const k::KernelTable& ref = k::scalar_kernels();
  lasforge::Rng rng(4);
  for (std::size_t m : {1, 2, 5}) {
    for (std::size_t kk : kSizes) {
      for (std::size_t n : kSizes) {
        const auto a = random_vec(m * kk, rng);
        const auto b = random_vec(kk * n, rng);
        std::vector<double> c1(m * n), c2(m * n);
        ref.gemm_nn(a.data(), b.data(), c1.data(), m, kk, n);
        simd->gemm_nn(a.data(), b.data(), c2.data(), m, kk, n);
        REQUIRE(bits_equal(c1, c2));

        const auto bm = random_vec(m * n, rng);
        std::vector<double> d1 = random_vec(kk * n, rng), d2 = d1;
        ref.gemm_tn_acc(a.data(), bm.data(), d1.data(), m, kk, n);
        simd->gemm_tn_acc(a.data(), bm.data(), d2.data(), m, kk, n);
        REQUIRE(bits_equal(d1, d2));
      }
    }
  }
  for (std::size_t n : kSizes) {
    const auto x = random_vec(n, rng);
    std::vector<double> y1 = random_vec(n, rng), y2 = y1;
    ref.axpy(-0.37, x.data(), y1.data(), n);
    simd->axpy(-0.37, x.data(), y2.data(), n);
    REQUIRE(bits_equal(y1, y2));

    std::vector<double> px(n), g(n);
    for (std::size_t i = 0; i < n; ++i) {
      px[i] = rng.uniform();
      g[i] = i % 5 == 0 ? 0.0 : rng.uniform(-1.0, 1.0);
    }
    std::vector<double> e1(n, 0.0), e2(n, 0.0);
    for (int t = 0; t < 4; ++t) {
      ref.pgd_step(px.data(), g.data(), e1.data(), n, 2.0 / 255, 8.0 / 255);
      simd->pgd_step(px.data(), g.data(), e2.data(), n, 2.0 / 255, 8.0 / 255);
    }
    REQUIRE(bits_equal(e1, e2));
  }
}

TEST_CASE("active table is one of the compiled variants") {
  const auto name = k::active().name;
  CHECK((name == "scalar" || name == "avx2"));
}
