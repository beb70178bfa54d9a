#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "lasforge/attack.hpp"
#include "lasforge/networks.hpp"
#include "lasforge/rng.hpp"

namespace lasforge {

struct SampledStrategy {
  AttackStrategy strategy;
  // Sum over heads of log p_m(selected option); always <= 0.
  double log_prob = 0.0;
};

// One independent categorical draw per head and sample.
std::vector<SampledStrategy> sample(const StrategyDistribution& dist, const StrategySpace& space,
                                    Rng& rng);

// Gradient of sum_{n, c} weights[n, c] * log_softmax_heads(f_theta(x))[n, c].
// `weights` is [samples, heads.total()].
ModelParams weighted_log_prob_gradient(const ModelParams& theta, const StrategyHeads& heads,
                                       const Tensor& x, const Tensor& weights);

struct ReinforceOptions {
  // Subtract the batch mean of the objective before weighting. Off by
  // default; the plain estimator has no baseline.
  bool mean_baseline = false;
};

// (1/N) sum_n objective[n] * grad_theta log p(a^n | x^n; theta), with the
// objective values treated as constants.
ModelParams reinforce_gradient(const ModelParams& theta, const StrategySpace& space,
                               const Tensor& x, std::span<const SampledStrategy> samples,
                               std::span<const double> objective,
                               const ReinforceOptions& options = {});

// Realized objective of sample n under strategy a.
using StrategyObjective = std::function<double(std::size_t sample, const AttackStrategy& a)>;

inline constexpr std::size_t kMaxEnumeratedStrategies = 10000;

// Exact grad_theta (1/N) sum_n E_{a ~ p(.|x^n)}[objective(n, a)] by
// enumerating the whole strategy space.
ModelParams exact_objective_gradient(const ModelParams& theta, const StrategySpace& space,
                                     const Tensor& x, const StrategyObjective& objective);

// (1/N) sum_n E_{a ~ p(.|x^n)}[objective(n, a)] by enumeration.
double expected_objective(const ModelParams& theta, const StrategySpace& space, const Tensor& x,
                          const StrategyObjective& objective);

// theta += eta2 * grad (gradient ascent).
void update_strategy(ModelParams& theta, const ModelParams& grad, double eta2);

}  // namespace lasforge

namespace lasforge {

// Strategy-network parameters whose output is (numerically) one-hot on `a`:
// all weights zero, output bias 0 on the selected options and -margin elsewhere.
ModelParams one_hot_strategy(const MlpSpec& spec, const StrategySpace& space,
                             const AttackStrategy& a, double margin = 50.0);

}  // namespace lasforge
