#include <doctest.h>

#include <cmath>

#include "lasforge/diagnostics.hpp"
#include "lasforge/errors.hpp"
#include "lasforge/trainer.hpp"
#include "oracles.hpp"

using namespace lasforge;

namespace {

ConvergenceParams random_params(Rng& rng) {
  ConvergenceParams p;
  p.L_ww = rng.uniform(0.0, 5.0);
  p.L_wtheta = rng.uniform(0.0, 5.0);
  p.L_thetaw = rng.uniform(0.0, 5.0);
  p.mu = rng.uniform(0.1, 5.0);
  p.sigma2 = rng.uniform(0.01, 5.0);
  p.delta = rng.uniform(0.0, 2.0);
  p.Delta = rng.uniform(0.0, 10.0);
  p.T = 1 + rng.below(1000);
  return p;
}

EpochMetrics with_norm(std::size_t epoch, double g) {
  EpochMetrics m;
  m.epoch = epoch;
  m.grad_norm_sq = g;
  return m;
}

}  // namespace

TEST_CASE("formula arithmetic") {
  ConvergenceParams p;
  p.L_ww = 1;
  p.L_wtheta = 2;
  p.L_thetaw = 3;
  p.mu = 6;
  CHECK(lipschitz_L0(p) == 2.0);
  p.L_wtheta = p.L_thetaw = 0;
  p.L_ww = 1.75;
  CHECK(lipschitz_L0(p) == 1.75);

  ConvergenceParams q;  // L0 = 1
  CHECK(theoretical_lr(q) == 1.0);
  q.L_ww = 2;
  q.Delta = 8;
  q.T = 4;
  CHECK(theoretical_lr(q) == 0.5);

  ConvergenceParams b;
  b.T = 4;
  CHECK(convergence_bound(b) == 2.0);
  b.Delta = 0;
  CHECK(convergence_bound(b) == 0.0);
  b.Delta = 1;
  b.T = 100000000;
  CHECK(convergence_bound(b) < 1e-3);

  CHECK(approx_grad_gap(0.0, 1.0, 3.0) == 0.0);
  CHECK(approx_grad_gap(4.0, 1.0, 3.0) == 6.0);
}

TEST_CASE("formulas agree with a direct transcription") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const ConvergenceParams p = random_params(rng);
    const double L0 = p.L_wtheta * p.L_thetaw / p.mu + p.L_ww;
    if (L0 <= 0) continue;
    const double T = static_cast<double>(p.T);
    CHECK(lipschitz_L0(p) == doctest::Approx(L0).epsilon(1e-14));
    CHECK(theoretical_lr(p) ==
          doctest::Approx(std::min(1.0 / L0, std::sqrt(p.Delta / (p.sigma2 * T * L0)))).epsilon(1e-14));
    CHECK(convergence_bound(p) == doctest::Approx(4.0 * std::sqrt(p.sigma2) * std::sqrt(p.Delta * L0 / T) +
                                                  5.0 * p.delta * p.L_wtheta * p.L_wtheta / p.mu)
                                      .epsilon(1e-14));
  }
}

TEST_CASE("monotonicity under fuzzing") {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    ConvergenceParams p = random_params(rng);
    p.L_ww += 0.01;
    const double base = convergence_bound(p);
    const double lr = theoretical_lr(p);
    ConvergenceParams q = p;
    q.T = p.T + 1 + rng.below(100);
    CHECK(convergence_bound(q) <= base);
    CHECK(theoretical_lr(q) <= lr);
    q = p;
    q.sigma2 *= 1.5;
    CHECK(convergence_bound(q) >= base);
    q = p;
    q.Delta += 1.0;
    CHECK(convergence_bound(q) >= base);
    q = p;
    q.L_ww += 1.0;
    CHECK(convergence_bound(q) >= base);
    q = p;
    q.delta += 0.5;
    CHECK(convergence_bound(q) >= base);
    const double d = rng.uniform(0.0, 3.0), mu = rng.uniform(0.1, 3.0), l = rng.uniform(0.0, 3.0);
    CHECK(approx_grad_gap(4.0 * d, mu, l) == doctest::Approx(2.0 * approx_grad_gap(d, mu, l)).epsilon(1e-14));
  }
}

TEST_CASE("invalid parameters") {
  ConvergenceParams p;
  p.mu = 0;
  CHECK_THROWS_AS(lipschitz_L0(p), std::invalid_argument);
  p = {};
  p.T = 0;
  CHECK_THROWS_AS(theoretical_lr(p), std::invalid_argument);
  p = {};
  p.sigma2 = 0;
  CHECK_THROWS_AS(convergence_bound(p), std::invalid_argument);
  p = {};
  p.delta = -1;
  CHECK_THROWS_AS(convergence_bound(p), std::invalid_argument);
  CHECK_THROWS_AS(approx_grad_gap(1.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(approx_grad_gap(-1.0, 1.0, 1.0), std::invalid_argument);
}

TEST_CASE("gradient-norm trace") {
  SUBCASE("constant norms") {
    std::vector<EpochMetrics> e;
    for (std::size_t i = 0; i < 5; ++i) e.push_back(with_norm(i, 0.25));
    for (double v : estimate_grad_norm_trace(e).running_average) CHECK(v == 0.25);
  }
  SUBCASE("single epoch") {
    const auto t = estimate_grad_norm_trace(std::vector<EpochMetrics>{with_norm(0, 3.5)});
    REQUIRE(t.running_average.size() == 1);
    CHECK(t.running_average[0] == 3.5);
  }
  SUBCASE("epochs without w steps are skipped") {
    const auto t = estimate_grad_norm_trace(
        std::vector<EpochMetrics>{with_norm(0, 4.0), with_norm(1, std::nan("")), with_norm(2, 2.0)});
    CHECK(t.epochs == std::vector<std::size_t>{0, 2});
    CHECK(t.running_average == std::vector<double>{4.0, 3.0});
  }
  SUBCASE("nothing to report") {
    CHECK_THROWS_AS(estimate_grad_norm_trace(std::vector<EpochMetrics>{}), std::invalid_argument);
    CHECK_THROWS_AS(estimate_grad_norm_trace(std::vector<EpochMetrics>{with_norm(0, std::nan(""))}),
                    std::invalid_argument);
  }
}

TEST_CASE("convex toy: the running average of the squared gradient norm falls") {
  // Softmax regression on well-separated blobs, clean fixed strategy.
  TrainConfig cfg;
  cfg.data.kind = "blobs";
  cfg.data.separation = 10.0;
  cfg.data.n = 300;
  cfg.target_hidden = {};
  cfg.epochs = 100;
  cfg.k = 1;
  cfg.eta1 = 0.5;
  const DataSplit data = make_data(cfg);
  const auto r = train_fixed_strategy(data, cfg, FixedStrategy{0, 0, 1});
  const auto t = estimate_grad_norm_trace(r.metrics);
  REQUIRE(t.running_average.size() == 100);
  MESSAGE("running average: first ", t.running_average.front(), " last ", t.running_average.back());
  CHECK(t.running_average.front() >= 10.0 * t.running_average.back());
  for (std::size_t i = 1; i < t.running_average.size(); ++i) {
    CHECK(t.running_average[i] <= t.running_average[i - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("lipschitz estimate") {
  // Gradient of 0.5 * c * ||w||^2 is c * w, with constant exactly c.
  const ModelParams center = init_mlp({2, {3}, 2}, 1);
  const GradientFn g = [](const ModelParams& w) {
    ModelParams out = w;
    out.scale(2.5);
    return out;
  };
  Rng rng(3);
  CHECK(estimate_lipschitz(g, center, rng) == doctest::Approx(2.5).epsilon(1e-9));
  const GradientFn flat = [](const ModelParams& w) { return w.zeros_like(); };
  CHECK(estimate_lipschitz(flat, center, rng) == 0.0);
}

TEST_CASE("params file and CSV") {
  const auto p = parse_convergence_params(
      "# constants\nL_ww = 1\nL_wtheta = 2\nL_thetaw = 3\nmu = 6\nsigma2 = 4\ndelta = 0\nDelta = 1\nT = 16\n");
  CHECK(lipschitz_L0(p) == 2.0);
  CHECK(p.T == 16);
  CHECK_THROWS_AS(parse_convergence_params("L_ww = x\n"), ConfigError);
  CHECK_THROWS_AS(parse_convergence_params("bogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_convergence_params("mu = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_convergence_params("no equals sign\n"), ConfigError);

  GradNormTrace t;
  t.epochs = {0, 1};
  t.grad_norm_sq = {1.0, 0.5};
  t.running_average = {1.0, 0.75};
  ConvergenceParams c;
  const std::string csv = diagnose_csv(t, c);
  CHECK(csv.rfind("epoch,running_avg_grad_norm,bound\n", 0) == 0);
  CHECK(csv.find("\n0,1,4\n") != std::string::npos);
  CHECK(csv.find("\n1,0.75,") != std::string::npos);
}
