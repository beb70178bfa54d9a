#include "lasforge/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lasforge {

std::vector<SampledStrategy> sample(const StrategyDistribution& dist, const StrategySpace& space,
                                    Rng& rng) {
  const StrategyHeads expected = space.heads();
  if (dist.heads.sizes != expected.sizes) {
    throw ShapeError("sample: distribution heads do not match the strategy space");
  }
  dist.validate();
  std::vector<SampledStrategy> out(dist.samples);
  for (std::size_t n = 0; n < dist.samples; ++n) {
    std::array<std::size_t, StrategySpace::kParameters> pick{};
    double log_prob = 0.0;
    for (std::size_t m = 0; m < StrategySpace::kParameters; ++m) {
      const auto probs = dist.head(n, m);
      const double u = rng.uniform();
      double cumulative = 0.0;
      std::size_t chosen = probs.size();
      for (std::size_t k = 0; k < probs.size(); ++k) {
        cumulative += probs[k];
        if (u < cumulative) {
          chosen = k;
          break;
        }
      }
      if (chosen == probs.size()) {
        // u landed in the rounding gap above the cumulative sum.
        chosen = probs.size() - 1;
        while (chosen > 0 && probs[chosen] == 0.0) --chosen;
      }
      pick[m] = chosen;
      log_prob += std::log(probs[chosen]);
    }
    out[n].strategy = space.at(pick[0], pick[1], pick[2]);
    out[n].log_prob = log_prob;
  }
  return out;
}

ModelParams weighted_log_prob_gradient(const ModelParams& theta, const StrategyHeads& heads,
                                       const Tensor& x, const Tensor& weights) {
  Tape tape;
  const auto vars = bind_params(tape, theta, true);
  const Var logits = mlp_forward(vars, tape.constant(x));
  if (weights.shape != logits.shape()) {
    throw ShapeError("log-prob weights " + shape_string(weights.shape) + " vs logits " +
                     shape_string(logits.shape()));
  }
  const Var logp = log_softmax(logits, heads.sizes);
  const Var root = sum(mul(logp, tape.constant(weights)));
  tape.backward(root);
  return collect_gradients(tape, vars, theta);
}

ModelParams reinforce_gradient(const ModelParams& theta, const StrategySpace& space,
                               const Tensor& x, std::span<const SampledStrategy> samples,
                               std::span<const double> objective, const ReinforceOptions& options) {
  const std::size_t n = samples.size();
  if (n == 0) throw std::invalid_argument("reinforce_gradient: empty batch");
  if (objective.size() != n || x.rows() != n) {
    throw std::invalid_argument("reinforce_gradient: need one objective value per sample");
  }
  double baseline = 0.0;
  if (options.mean_baseline) {
    for (double v : objective) baseline += v;
    baseline /= static_cast<double>(n);
  }
  const StrategyHeads heads = space.heads();
  Tensor weights = Tensor::zeros({n, heads.total()});
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(objective[i])) throw NumericalError("reinforce_gradient: non-finite objective");
    const double c = (objective[i] - baseline) / static_cast<double>(n);
    const auto& a = samples[i].strategy;
    weights(i, heads.offset(0) + a.epsilon.index) += c;
    weights(i, heads.offset(1) + a.step.index) += c;
    weights(i, heads.offset(2) + a.iterations.index) += c;
  }
  return weighted_log_prob_gradient(theta, heads, x, weights);
}

namespace {

void require_enumerable(const StrategySpace& space) {
  space.validate();
  if (space.size() > kMaxEnumeratedStrategies) {
    throw std::invalid_argument("strategy space of " + std::to_string(space.size()) +
                                " strategies is too large to enumerate");
  }
}

double joint_prob(const StrategyDistribution& dist, std::size_t n, const AttackStrategy& a) {
  return dist.prob(n, 0, a.epsilon.index) * dist.prob(n, 1, a.step.index) *
         dist.prob(n, 2, a.iterations.index);
}

}  // namespace

ModelParams exact_objective_gradient(const ModelParams& theta, const StrategySpace& space,
                                     const Tensor& x, const StrategyObjective& objective) {
  require_enumerable(space);
  const StrategyHeads heads = space.heads();
  const StrategyDistribution dist = strategy_forward(theta, heads, x);
  const std::size_t n = dist.samples;
  // grad E[L] = sum_a p(a) L(a) grad log p(a); log p(a) is a sum over heads,
  // so each enumerated term adds p(a) L(a) / N to the weight of every
  // selected head entry.
  Tensor weights = Tensor::zeros({n, heads.total()});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t flat = 0; flat < space.size(); ++flat) {
      const AttackStrategy a = space.decode(flat);
      const double c = joint_prob(dist, i, a) * objective(i, a) / static_cast<double>(n);
      weights(i, heads.offset(0) + a.epsilon.index) += c;
      weights(i, heads.offset(1) + a.step.index) += c;
      weights(i, heads.offset(2) + a.iterations.index) += c;
    }
  }
  return weighted_log_prob_gradient(theta, heads, x, weights);
}

double expected_objective(const ModelParams& theta, const StrategySpace& space, const Tensor& x,
                          const StrategyObjective& objective) {
  require_enumerable(space);
  const StrategyDistribution dist = strategy_forward(theta, space.heads(), x);
  double total = 0.0;
  for (std::size_t i = 0; i < dist.samples; ++i) {
    for (std::size_t flat = 0; flat < space.size(); ++flat) {
      const AttackStrategy a = space.decode(flat);
      total += joint_prob(dist, i, a) * objective(i, a);
    }
  }
  return total / static_cast<double>(dist.samples);
}

void update_strategy(ModelParams& theta, const ModelParams& grad, double eta2) {
  theta.axpy(grad, eta2);
}

}  // namespace lasforge

namespace lasforge {

ModelParams one_hot_strategy(const MlpSpec& spec, const StrategySpace& space,
                             const AttackStrategy& a, double margin) {
  const StrategyHeads heads = space.heads();
  if (spec.output != heads.total()) {
    throw ShapeError("one_hot_strategy: network output does not match the strategy heads");
  }
  if (!space.contains(a)) throw std::invalid_argument("one_hot_strategy: strategy not in space");
  ModelParams theta = init_mlp(spec, 0).zeros_like();
  Tensor& bias = theta.tensor(theta.count() - 1);
  std::fill(bias.data.begin(), bias.data.end(), -margin);
  bias.data[heads.offset(0) + a.epsilon.index] = 0.0;
  bias.data[heads.offset(1) + a.step.index] = 0.0;
  bias.data[heads.offset(2) + a.iterations.index] = 0.0;
  return theta;
}

}  // namespace lasforge
