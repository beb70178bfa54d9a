#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lasforge/autodiff.hpp"
#include "lasforge/networks.hpp"
#include "lasforge/rng.hpp"

namespace lasforge {

// One selected option of an attack parameter: its position in the option list
// and the value it resolves to.
struct Choice {
  std::size_t index = 0;
  int value = 0;
  bool operator==(const Choice&) const = default;
};

// Radius and step are in units of 1/255 of the [0, 1] feature range.
struct AttackStrategy {
  Choice epsilon;
  Choice step;
  Choice iterations;
  bool operator==(const AttackStrategy&) const = default;
};

std::string to_string(const AttackStrategy& a);

// Discrete grid of attack parameters. Head order is fixed: epsilon, step,
// iterations.
struct StrategySpace {
  std::vector<int> epsilon;
  std::vector<int> step;
  std::vector<int> iterations;

  static constexpr std::size_t kParameters = 3;
  static const std::array<const char*, kParameters>& parameter_names();

  // epsilon 3..15, step 1..6, iterations 3..15.
  static StrategySpace defaults();
  static StrategySpace singleton(int epsilon, int step, int iterations);

  const std::vector<int>& options(std::size_t parameter) const;
  void validate() const;
  StrategyHeads heads() const;
  // Number of distinct strategies.
  std::size_t size() const;

  AttackStrategy at(std::size_t epsilon_index, std::size_t step_index,
                    std::size_t iterations_index) const;
  // Mixed-radix decode of a flat index in [0, size()), epsilon most significant.
  AttackStrategy decode(std::size_t flat) const;
  // Strategy with the given values; throws std::invalid_argument if absent.
  AttackStrategy resolve(int epsilon, int step, int iterations) const;
  bool contains(const AttackStrategy& a) const;
};

struct AttackOptions {
  bool random_start = true;
};

struct AdversarialBatch {
  Tensor x_adv;
  std::vector<AttackStrategy> strategies;
};

// L-infinity PGD with one strategy per sample. Each sample stops after its
// own iteration budget; perturbations stay inside both the epsilon ball and
// the [0, 1] box throughout. Never touches `w`.
AdversarialBatch pgd_attack(const Tensor& x, std::span<const std::size_t> labels,
                            std::span<const AttackStrategy> strategies, const StrategySpace& space,
                            const ModelParams& w, Rng& rng, const AttackOptions& options = {});

// PGD with a fixed (epsilon, step, iterations) triple for every sample.
struct EvalAttackSpec {
  int epsilon = 8;
  int step = 2;
  int iterations = 10;
  bool operator==(const EvalAttackSpec&) const = default;
};

AdversarialBatch fixed_eval_attack(const Tensor& x, std::span<const std::size_t> labels,
                                   const ModelParams& w, Rng& rng, const EvalAttackSpec& spec = {},
                                   const AttackOptions& options = {});

// Single sign step of size epsilon/255 from x, clipped to [0, 1].
AdversarialBatch fgsm_attack(const Tensor& x, std::span<const std::size_t> labels,
                             const ModelParams& w, int epsilon);

// Accuracy of w on PGD examples generated by `spec`.
double robust_accuracy(const ModelParams& w, const Tensor& x, std::span<const std::size_t> labels,
                       Rng& rng, const EvalAttackSpec& spec = {}, const AttackOptions& options = {});

}  // namespace lasforge
