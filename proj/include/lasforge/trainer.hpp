#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lasforge/attack.hpp"
#include "lasforge/config.hpp"
#include "lasforge/dataset.hpp"
#include "lasforge/networks.hpp"
#include "lasforge/rng.hpp"
#include "lasforge/strategy.hpp"

namespace lasforge {

// Per-sample objective terms. l0 = l1 + alpha * l2 + beta * l3 holds exactly.
struct ObjectiveBreakdown {
  std::vector<double> l1;  // adversarial cross-entropy of w, >= 0
  std::vector<double> l2;  // -cross-entropy of the lookahead model on eval-attacked x, <= 0
  std::vector<double> l3;  // -clean cross-entropy of the lookahead model, <= 0
  std::vector<double> l0;

  std::size_t size() const noexcept { return l0.size(); }
  static double mean(const std::vector<double>& v);
};

// Independent random streams for one minibatch (see rng.hpp).
struct BatchStreams {
  Rng sampling;
  Rng attack;
  Rng lookahead;

  static BatchStreams for_batch(std::uint64_t seed, std::size_t epoch, std::size_t batch);
};

MlpSpec target_spec(const TrainConfig& cfg, std::size_t input, std::size_t classes);
MlpSpec strategy_spec(const TrainConfig& cfg, std::size_t input);

// Mean adversarial cross-entropy of w.
double loss_L1(const ModelParams& w, const Tensor& x_adv, std::span<const std::size_t> labels);

struct Lookahead {
  ModelParams updated;   // w - lambda * grad
  ModelParams gradient;  // grad_w of the mean L1 at x_adv
};

// One virtual SGD step on L1. `w` is only read; the result shares no storage with it.
Lookahead one_step_update(const ModelParams& w, const Tensor& x_adv,
                          std::span<const std::size_t> labels, double lambda);

// -cross-entropy of w_hat on examples attacked against w_hat by `spec`, per sample.
std::vector<double> loss_L2(const Tensor& x, std::span<const std::size_t> labels,
                            const ModelParams& w_hat, Rng& rng, const EvalAttackSpec& spec = {},
                            const AttackOptions& options = {});

// -clean cross-entropy of w_hat, per sample.
std::vector<double> loss_L3(const Tensor& x, std::span<const std::size_t> labels,
                            const ModelParams& w_hat);

struct ObjectiveEvaluation {
  ObjectiveBreakdown breakdown;
  std::vector<SampledStrategy> sampled;
  AdversarialBatch adversarial;
  ModelParams w_gradient;  // grad_w of mean L1, reused by the w update
};

// Samples a^n ~ p(.|x^n; theta), attacks, and scores every sample.
ObjectiveEvaluation evaluate_objective(const Batch& batch, const ModelParams& theta,
                                       const ModelParams& w, const TrainConfig& cfg,
                                       BatchStreams& streams);

// Same scoring for caller-chosen strategies (no sampling).
ObjectiveEvaluation evaluate_strategies(const Batch& batch,
                                        std::span<const AttackStrategy> strategies,
                                        const ModelParams& w, const TrainConfig& cfg,
                                        BatchStreams& streams);

// L0 of sample n under strategy a with a per-sample lookahead model and
// attack randomness derived from (seed, n, a). Deterministic, so it can be
// enumerated over the strategy space.
StrategyObjective per_sample_objective(const Batch& batch, const ModelParams& w,
                                       const TrainConfig& cfg, std::uint64_t seed);

struct OptionCount {
  int value = 0;
  std::size_t count = 0;
  bool operator==(const OptionCount&) const = default;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double mean_l1 = 0.0;
  double mean_l2 = 0.0;
  double mean_l3 = 0.0;
  double mean_l0 = 0.0;
  double grad_norm_sq = 0.0;  // mean ||grad_w L0||^2 over this epoch's w updates; NaN if none
  double mean_epsilon = 0.0;
  double mean_step = 0.0;
  double mean_iterations = 0.0;
  std::size_t samples = 0;        // strategies drawn this epoch
  std::size_t theta_updates = 0;  // cumulative
  std::size_t w_updates = 0;      // cumulative
  std::array<std::vector<OptionCount>, StrategySpace::kParameters> histograms;
  double wall_seconds = 0.0;
};

struct RunMetrics {
  std::vector<EpochMetrics> epochs;
  std::size_t theta_updates = 0;
  std::size_t w_updates = 0;
  // One character per parameter update in order: 'T' strategy, 'W' target.
  std::string schedule;
  double wall_seconds = 0.0;
};

struct TrainOptions {
  std::optional<ModelParams> initial_target;
  std::optional<ModelParams> initial_strategy;
  std::optional<std::filesystem::path> out_dir;  // checkpoints go here when set
  bool record_schedule = false;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainResult {
  ModelParams target;
  ModelParams strategy;
  RunMetrics metrics;
};

// Alternating optimization: every minibatch takes one strategy ascent step;
// every k-th minibatch (counted across epochs) also takes one target descent
// step on the examples generated for that strategy step. Delegates to
// train_fixed_strategy when cfg.fixed_strategy is set.
TrainResult train(const DataSplit& data, const TrainConfig& cfg, const TrainOptions& options = {});

// The same loop with one hand-picked strategy for every sample; the strategy
// network is never consulted or updated. Target updates keep the k-th-batch
// cadence, so both loops take the same number of target steps.
TrainResult train_fixed_strategy(const DataSplit& data, const TrainConfig& cfg,
                                 const FixedStrategy& a, const TrainOptions& options = {});

}  // namespace lasforge
