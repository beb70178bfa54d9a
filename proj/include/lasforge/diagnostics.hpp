#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "lasforge/networks.hpp"
#include "lasforge/rng.hpp"
#include "lasforge/trainer.hpp"

namespace lasforge {

// Smoothness and variance constants for the convergence bound. Lipschitz
// constants may be zero (decoupled or constant-gradient cases).
struct ConvergenceParams {
  double L_ww = 1.0;
  double L_wtheta = 0.0;
  double L_thetaw = 0.0;
  double mu = 1.0;
  double sigma2 = 1.0;
  double delta = 0.0;
  double Delta = 1.0;
  std::size_t T = 1;

  void validate() const;
};

// L_wtheta * L_thetaw / mu + L_ww
double lipschitz_L0(const ConvergenceParams& p);
// min(1 / L0, sqrt(Delta / (sigma2 * T * L0)))
double theoretical_lr(const ConvergenceParams& p);
// 4 sigma sqrt(Delta L0 / T) + 5 delta L_wtheta^2 / mu
double convergence_bound(const ConvergenceParams& p);
// L_wtheta sqrt(delta / mu)
double approx_grad_gap(double delta, double mu, double L_wtheta);

struct GradNormTrace {
  std::vector<std::size_t> epochs;   // epochs that took at least one w step
  std::vector<double> grad_norm_sq;  // per-epoch mean ||grad_w||^2
  std::vector<double> running_average;
};

// Throws std::invalid_argument if no epoch carries a gradient-norm record.
GradNormTrace estimate_grad_norm_trace(const RunMetrics& metrics);
GradNormTrace estimate_grad_norm_trace(const std::vector<EpochMetrics>& epochs);

// Heuristic: largest ||g(a) - g(b)|| / ||a - b|| over random pairs drawn
// around `center` with per-coordinate offsets in [-radius, radius]. This is a
// lower estimate of the true constant, nothing more.
using GradientFn = std::function<ModelParams(const ModelParams&)>;
double estimate_lipschitz(const GradientFn& gradient, const ModelParams& center, Rng& rng,
                          std::size_t pairs = 32, double radius = 0.1);

// key = value lines: L_ww, L_wtheta, L_thetaw, mu, sigma2, delta, Delta, T.
ConvergenceParams parse_convergence_params(const std::string& text, const std::string& source = "params");
ConvergenceParams load_convergence_params(const std::filesystem::path& path);

// epoch,running_avg_grad_norm,bound with the bound evaluated at T = epochs so far.
std::string diagnose_csv(const GradNormTrace& trace, const ConvergenceParams& params);

// Printed alongside diagnose output.
inline constexpr const char* kBoundCaveat =
    "note: the bound assumes strong concavity in the strategy parameters, which the "
    "implemented networks do not satisfy; treat it as an overlay, not a guarantee";

}  // namespace lasforge
