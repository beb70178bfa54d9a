#include "lasforge/attack.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "lasforge/kernels.hpp"

namespace lasforge {

std::string to_string(const AttackStrategy& a) {
  std::ostringstream os;
  os << "(eps=" << a.epsilon.value << ", step=" << a.step.value << ", iters=" << a.iterations.value
     << ')';
  return os.str();
}

const std::array<const char*, StrategySpace::kParameters>& StrategySpace::parameter_names() {
  static const std::array<const char*, kParameters> names{"epsilon", "step", "iterations"};
  return names;
}

namespace {

std::vector<int> range(int lo, int hi) {
  std::vector<int> out;
  for (int v = lo; v <= hi; ++v) out.push_back(v);
  return out;
}

std::size_t find_option(const std::vector<int>& options, int value, const char* name) {
  const auto it = std::find(options.begin(), options.end(), value);
  if (it == options.end()) {
    throw std::invalid_argument(std::string(name) + " value " + std::to_string(value) +
                                " is not in the strategy space");
  }
  return static_cast<std::size_t>(it - options.begin());
}

}  // namespace

StrategySpace StrategySpace::defaults() { return {range(3, 15), range(1, 6), range(3, 15)}; }

StrategySpace StrategySpace::singleton(int epsilon, int step, int iterations) {
  return {{epsilon}, {step}, {iterations}};
}

const std::vector<int>& StrategySpace::options(std::size_t parameter) const {
  switch (parameter) {
    case 0: return epsilon;
    case 1: return step;
    case 2: return iterations;
  }
  throw std::out_of_range("strategy parameter index out of range");
}

void StrategySpace::validate() const {
  for (std::size_t m = 0; m < kParameters; ++m) {
    const auto& opts = options(m);
    const std::string name = parameter_names()[m];
    if (opts.empty()) throw std::invalid_argument(name + " options must not be empty");
    for (std::size_t i = 1; i < opts.size(); ++i) {
      if (opts[i] <= opts[i - 1]) {
        throw std::invalid_argument(name + " options must be strictly increasing");
      }
    }
    if (opts.front() < 0) throw std::invalid_argument(name + " options must be non-negative");
  }
  if (iterations.front() < 1) throw std::invalid_argument("iteration options must be >= 1");
}

StrategyHeads StrategySpace::heads() const {
  return {{epsilon.size(), step.size(), iterations.size()}};
}

std::size_t StrategySpace::size() const {
  return epsilon.size() * step.size() * iterations.size();
}

AttackStrategy StrategySpace::at(std::size_t ie, std::size_t is, std::size_t ii) const {
  if (ie >= epsilon.size() || is >= step.size() || ii >= iterations.size()) {
    throw std::out_of_range("strategy option index out of range");
  }
  return {{ie, epsilon[ie]}, {is, step[is]}, {ii, iterations[ii]}};
}

AttackStrategy StrategySpace::decode(std::size_t flat) const {
  if (flat >= size()) throw std::out_of_range("strategy index out of range");
  const std::size_t ii = flat % iterations.size();
  flat /= iterations.size();
  const std::size_t is = flat % step.size();
  const std::size_t ie = flat / step.size();
  return at(ie, is, ii);
}

AttackStrategy StrategySpace::resolve(int e, int s, int i) const {
  return at(find_option(epsilon, e, "epsilon"), find_option(step, s, "step"),
            find_option(iterations, i, "iterations"));
}

bool StrategySpace::contains(const AttackStrategy& a) const {
  auto ok = [](const std::vector<int>& opts, const Choice& c) {
    return c.index < opts.size() && opts[c.index] == c.value;
  };
  return ok(epsilon, a.epsilon) && ok(step, a.step) && ok(iterations, a.iterations);
}

namespace {

// Gradient of the batch-mean cross-entropy with respect to the input rows.
Tensor loss_input_gradient(const ModelParams& w, const Tensor& x_in,
                           std::span<const std::size_t> labels) {
  Tape tape;
  const auto params = bind_params(tape, w, false);
  const Var x = tape.leaf(x_in, true);
  const Var loss = cross_entropy(mlp_forward(params, x), labels);
  Tensor g = input_gradient(loss, x);
  for (double v : g.data) {
    if (!std::isfinite(v)) throw NumericalError("pgd_attack: non-finite input gradient");
  }
  return g;
}

void require_unit_box(const Tensor& x) {
  for (double v : x.data) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("attack input outside [0, 1]");
  }
}

}  // namespace

AdversarialBatch pgd_attack(const Tensor& x, std::span<const std::size_t> labels,
                            std::span<const AttackStrategy> strategies, const StrategySpace& space,
                            const ModelParams& w, Rng& rng, const AttackOptions& options) {
  if (x.rank() != 2 || x.rows() != labels.size() || strategies.size() != labels.size()) {
    throw ShapeError("pgd_attack: input " + shape_string(x.shape) + " with " +
                     std::to_string(labels.size()) + " labels and " +
                     std::to_string(strategies.size()) + " strategies");
  }
  require_unit_box(x);
  for (const auto& a : strategies) {
    if (!space.contains(a)) {
      throw std::invalid_argument("pgd_attack: strategy " + to_string(a) + " is not in the space");
    }
  }
  const std::size_t n = x.rows(), d = x.cols();
  const auto& kern = kernels::active();
  std::vector<double> radius(n), step(n);
  std::size_t max_iters = 0;
  for (std::size_t i = 0; i < n; ++i) {
    radius[i] = strategies[i].epsilon.value / 255.0;
    step[i] = strategies[i].step.value / 255.0;
    max_iters = std::max<std::size_t>(max_iters, static_cast<std::size_t>(strategies[i].iterations.value));
  }

  Tensor delta = Tensor::zeros(x.shape);
  if (options.random_start) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double xv = x(i, j);
        const double lo = std::max(-radius[i], -xv);
        const double hi = std::min(radius[i], 1.0 - xv);
        const double u = rng.uniform(-radius[i], radius[i]);
        delta(i, j) = std::min(std::max(u, lo), hi);
      }
    }
  }

  Tensor x_cur = x;
  for (std::size_t t = 0; t < max_iters; ++t) {
    for (std::size_t k = 0; k < x.size(); ++k) x_cur.data[k] = x.data[k] + delta.data[k];
    const Tensor g = loss_input_gradient(w, x_cur, labels);
    for (std::size_t i = 0; i < n; ++i) {
      if (t >= static_cast<std::size_t>(strategies[i].iterations.value)) continue;
      kern.pgd_step(x.data.data() + i * d, g.data.data() + i * d, delta.data.data() + i * d, d,
                    step[i], radius[i]);
    }
  }

  AdversarialBatch out;
  out.x_adv = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    out.x_adv.data[k] = std::min(std::max(x.data[k] + delta.data[k], 0.0), 1.0);
  }
  out.strategies.assign(strategies.begin(), strategies.end());
  return out;
}

AdversarialBatch fixed_eval_attack(const Tensor& x, std::span<const std::size_t> labels,
                                   const ModelParams& w, Rng& rng, const EvalAttackSpec& spec,
                                   const AttackOptions& options) {
  const StrategySpace space = StrategySpace::singleton(spec.epsilon, spec.step, spec.iterations);
  space.validate();
  const std::vector<AttackStrategy> a(labels.size(), space.at(0, 0, 0));
  return pgd_attack(x, labels, a, space, w, rng, options);
}

AdversarialBatch fgsm_attack(const Tensor& x, std::span<const std::size_t> labels,
                             const ModelParams& w, int epsilon) {
  const StrategySpace space = StrategySpace::singleton(epsilon, epsilon, 1);
  space.validate();
  const std::vector<AttackStrategy> a(labels.size(), space.at(0, 0, 0));
  Rng unused(0);
  return pgd_attack(x, labels, a, space, w, unused, AttackOptions{false});
}

double robust_accuracy(const ModelParams& w, const Tensor& x, std::span<const std::size_t> labels,
                       Rng& rng, const EvalAttackSpec& spec, const AttackOptions& options) {
  const auto adv = fixed_eval_attack(x, labels, w, rng, spec, options);
  return accuracy(w, adv.x_adv, labels);
}

}  // namespace lasforge
