#include "lasforge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "lasforge/errors.hpp"

namespace lasforge {

double ObjectiveBreakdown::mean(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

BatchStreams BatchStreams::for_batch(std::uint64_t seed, std::size_t epoch, std::size_t batch) {
  return {Rng(seed, Stream::sampling, epoch, batch), Rng(seed, Stream::attack, epoch, batch),
          Rng(seed, Stream::lookahead_attack, epoch, batch)};
}

MlpSpec target_spec(const TrainConfig& cfg, std::size_t input, std::size_t classes) {
  return {input, cfg.target_hidden, classes};
}

MlpSpec strategy_spec(const TrainConfig& cfg, std::size_t input) {
  return {input, cfg.strategy_hidden, cfg.space.heads().total()};
}

double loss_L1(const ModelParams& w, const Tensor& x_adv, std::span<const std::size_t> labels) {
  return ObjectiveBreakdown::mean(per_sample_cross_entropy(target_forward(w, x_adv), labels));
}

Lookahead one_step_update(const ModelParams& w, const Tensor& x_adv,
                          std::span<const std::size_t> labels, double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("one_step_update: lambda must be >= 0");
  Tape tape;
  const auto vars = bind_params(tape, w, true);
  const Var loss = cross_entropy(mlp_forward(vars, tape.constant(x_adv)), labels);
  tape.backward(loss);
  Lookahead out;
  out.gradient = collect_gradients(tape, vars, w);
  out.updated = axpy_update(w, out.gradient, -lambda);
  return out;
}

std::vector<double> loss_L2(const Tensor& x, std::span<const std::size_t> labels,
                            const ModelParams& w_hat, Rng& rng, const EvalAttackSpec& spec,
                            const AttackOptions& options) {
  const auto adv = fixed_eval_attack(x, labels, w_hat, rng, spec, options);
  auto ce = per_sample_cross_entropy(target_forward(w_hat, adv.x_adv), labels);
  for (double& v : ce) v = -v;
  return ce;
}

std::vector<double> loss_L3(const Tensor& x, std::span<const std::size_t> labels,
                            const ModelParams& w_hat) {
  auto ce = per_sample_cross_entropy(target_forward(w_hat, x), labels);
  for (double& v : ce) v = -v;
  return ce;
}

namespace {

void combine(ObjectiveBreakdown& b, double alpha, double beta) {
  b.l0.resize(b.l1.size());
  for (std::size_t i = 0; i < b.l1.size(); ++i) {
    b.l0[i] = b.l1[i] + alpha * b.l2[i] + beta * b.l3[i];
  }
}

Batch single(const Batch& batch, std::size_t i) {
  Batch one;
  one.x = Tensor::matrix(1, batch.x.cols(),
                         std::vector<double>(batch.x.row(i).begin(), batch.x.row(i).end()));
  one.y = {batch.y[i]};
  one.indices = {batch.indices.empty() ? i : batch.indices[i]};
  return one;
}

}  // namespace

ObjectiveEvaluation evaluate_strategies(const Batch& batch,
                                        std::span<const AttackStrategy> strategies,
                                        const ModelParams& w, const TrainConfig& cfg,
                                        BatchStreams& streams) {
  const AttackOptions attack_opts{cfg.random_start};
  ObjectiveEvaluation out;
  StrategySpace space = cfg.space;
  out.adversarial = pgd_attack(batch.x, batch.y, strategies, space, w, streams.attack, attack_opts);
  const Tensor& x_adv = out.adversarial.x_adv;
  ObjectiveBreakdown& b = out.breakdown;
  b.l1 = per_sample_cross_entropy(target_forward(w, x_adv), batch.y);

  const Lookahead look = one_step_update(w, x_adv, batch.y, cfg.lookahead_step());
  out.w_gradient = look.gradient;
  if (!cfg.per_sample_lookahead) {
    b.l2 = loss_L2(batch.x, batch.y, look.updated, streams.lookahead, cfg.eval_attack, attack_opts);
    b.l3 = loss_L3(batch.x, batch.y, look.updated);
  } else {
    b.l2.resize(batch.size());
    b.l3.resize(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Batch one = single(batch, i);
      const Tensor adv_row = Tensor::matrix(1, x_adv.cols(),
                                            std::vector<double>(x_adv.row(i).begin(), x_adv.row(i).end()));
      const ModelParams w_hat = one_step_update(w, adv_row, one.y, cfg.lookahead_step()).updated;
      b.l2[i] = loss_L2(one.x, one.y, w_hat, streams.lookahead, cfg.eval_attack, attack_opts)[0];
      b.l3[i] = loss_L3(one.x, one.y, w_hat)[0];
    }
  }
  combine(b, cfg.alpha, cfg.beta);
  for (double v : b.l0) {
    if (!std::isfinite(v)) throw NumericalError("objective evaluation produced a non-finite L0");
  }
  return out;
}

ObjectiveEvaluation evaluate_objective(const Batch& batch, const ModelParams& theta,
                                       const ModelParams& w, const TrainConfig& cfg,
                                       BatchStreams& streams) {
  const StrategyDistribution dist = strategy_forward(theta, cfg.space.heads(), batch.x);
  auto sampled = sample(dist, cfg.space, streams.sampling);
  std::vector<AttackStrategy> strategies;
  strategies.reserve(sampled.size());
  for (const auto& s : sampled) strategies.push_back(s.strategy);
  ObjectiveEvaluation out = evaluate_strategies(batch, strategies, w, cfg, streams);
  out.sampled = std::move(sampled);
  return out;
}

StrategyObjective per_sample_objective(const Batch& batch, const ModelParams& w,
                                       const TrainConfig& cfg, std::uint64_t seed) {
  TrainConfig local = cfg;
  local.per_sample_lookahead = true;
  return [batch, w, local, seed](std::size_t n, const AttackStrategy& a) {
    const Batch one = single(batch, n);
    const std::uint64_t key = a.epsilon.index * 1000003ULL + a.step.index * 1009ULL + a.iterations.index;
    BatchStreams streams = BatchStreams::for_batch(seed, n, key);
    const AttackStrategy strategies[1] = {a};
    return evaluate_strategies(one, strategies, w, local, streams).breakdown.l0[0];
  };
}

namespace {

// Plain or momentum SGD. With zero momentum and decay: p += sign * lr * g.
class Sgd {
 public:
  Sgd(double lr, double momentum, double weight_decay, double direction)
      : lr_(lr), momentum_(momentum), weight_decay_(weight_decay), direction_(direction) {}

  void step(ModelParams& p, const ModelParams& g) {
    if (momentum_ == 0.0 && weight_decay_ == 0.0) {
      p.axpy(g, direction_ * lr_);
      return;
    }
    ModelParams update = g;
    if (weight_decay_ != 0.0) update.axpy(p, -direction_ * weight_decay_);
    if (momentum_ != 0.0) {
      if (!velocity_) velocity_ = p.zeros_like();
      velocity_->scale(momentum_);
      velocity_->axpy(update, 1.0);
      update = *velocity_;
    }
    p.axpy(update, direction_ * lr_);
  }

 private:
  double lr_, momentum_, weight_decay_, direction_;
  std::optional<ModelParams> velocity_;
};

class HistogramAccumulator {
 public:
  explicit HistogramAccumulator(const StrategySpace& space) {
    for (std::size_t m = 0; m < StrategySpace::kParameters; ++m) {
      for (int v : space.options(m)) counts_[m][v] = 0;
    }
  }
  explicit HistogramAccumulator(const FixedStrategy& f) {
    counts_[0][f.epsilon] = 0;
    counts_[1][f.step] = 0;
    counts_[2][f.iterations] = 0;
  }

  void add(const AttackStrategy& a) {
    ++counts_[0][a.epsilon.value];
    ++counts_[1][a.step.value];
    ++counts_[2][a.iterations.value];
    ++samples_;
  }

  void fill(EpochMetrics& m) const {
    m.samples = samples_;
    double* means[3] = {&m.mean_epsilon, &m.mean_step, &m.mean_iterations};
    for (std::size_t p = 0; p < StrategySpace::kParameters; ++p) {
      m.histograms[p].clear();
      double weighted = 0.0;
      for (const auto& [value, count] : counts_[p]) {
        m.histograms[p].push_back({value, count});
        weighted += static_cast<double>(value) * static_cast<double>(count);
      }
      *means[p] = samples_ ? weighted / static_cast<double>(samples_)
                           : std::numeric_limits<double>::quiet_NaN();
    }
  }

 private:
  std::array<std::map<int, std::size_t>, StrategySpace::kParameters> counts_;
  std::size_t samples_ = 0;
};

struct MeanAccumulator {
  double sum = 0.0;
  std::size_t count = 0;
  void add(const std::vector<double>& v) {
    for (double x : v) sum += x;
    count += v.size();
  }
  void add(double x) {
    sum += x;
    ++count;
  }
  double value() const {
    return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  }
};

std::string write_checkpoint(const std::filesystem::path& dir, const ModelParams& target,
                             const ModelParams& strategy) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_params(target, dir / "target.params");
  save_params(strategy, dir / "strategy.params");
  return dir.string();
}

std::string epoch_dir(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04zu", epoch);
  return buf;
}

struct RunState {
  ModelParams w;
  ModelParams theta;
  RunMetrics metrics;
};

RunState initial_state(const DataSplit& data, const TrainConfig& cfg, const TrainOptions& options) {
  cfg.validate();
  data.train.validate();
  RunState s;
  const std::size_t d = data.train.dim();
  s.w = options.initial_target
            ? *options.initial_target
            : init_mlp(target_spec(cfg, d, data.train.classes), derive_seed(cfg.seed, Stream::init_target));
  s.theta = options.initial_strategy
                ? *options.initial_strategy
                : init_mlp(strategy_spec(cfg, d), derive_seed(cfg.seed, Stream::init_strategy), true);
  if (infer_spec(s.w).input != d || infer_spec(s.theta).input != d) {
    throw ShapeError("initial parameters do not match the data dimension");
  }
  if (infer_spec(s.theta).output != cfg.space.heads().total()) {
    throw ShapeError("strategy parameters do not match the strategy space");
  }
  return s;
}

void finish_epoch(EpochMetrics& m, const RunState& s, const DataSplit& data, const TrainConfig& cfg,
                  std::size_t epoch) {
  m.epoch = epoch;
  m.clean_accuracy = accuracy(s.w, data.test.features, data.test.labels);
  Rng eval_rng(cfg.seed, Stream::evaluation, epoch);
  m.robust_accuracy = robust_accuracy(s.w, data.test.features, data.test.labels, eval_rng,
                                      cfg.eval_attack, AttackOptions{cfg.random_start});
  m.theta_updates = s.metrics.theta_updates;
  m.w_updates = s.metrics.w_updates;
}

[[noreturn]] void abort_run(const NumericalError& e, const ModelParams& w, const ModelParams& theta,
                            const TrainOptions& options, std::size_t epoch, std::size_t batch) {
  std::string path;
  if (options.out_dir) path = write_checkpoint(*options.out_dir / "abort", w, theta);
  throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch) + ": " + e.what(),
                        path);
}

template <typename StepFn>
TrainResult run_loop(const DataSplit& data, const TrainConfig& cfg, const TrainOptions& options,
                     RunState s, HistogramAccumulator blank_histogram, StepFn&& step) {
  const auto start = std::chrono::steady_clock::now();
  BatchIterator iterator(data.train, cfg.batch_size, cfg.seed);
  std::size_t global_batch = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    HistogramAccumulator hist = blank_histogram;
    MeanAccumulator l1, l2, l3, l0, grad_sq;
    const auto batches = iterator.batches(epoch);
    for (std::size_t b = 0; b < batches.size(); ++b, ++global_batch) {
      const bool update_w = (global_batch + 1) % cfg.k == 0;
      const ModelParams w_before = s.w;
      const ModelParams theta_before = s.theta;
      try {
        step(s, gather(data.train, batches[b]), epoch, b, update_w, hist, l1, l2, l3, l0, grad_sq);
      } catch (const NumericalError& e) {
        abort_run(e, w_before, theta_before, options, epoch, b);
      }
    }
    EpochMetrics m;
    m.mean_l1 = l1.value();
    m.mean_l2 = l2.value();
    m.mean_l3 = l3.value();
    m.mean_l0 = l0.value();
    m.grad_norm_sq = grad_sq.value();
    hist.fill(m);
    try {
      finish_epoch(m, s, data, cfg, epoch);
    } catch (const NumericalError& e) {
      abort_run(e, s.w, s.theta, options, epoch, batches.size());
    }
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start).count();
    s.metrics.epochs.push_back(m);
    if (options.on_epoch) options.on_epoch(m);
    if (options.out_dir && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0) {
      write_checkpoint(*options.out_dir / "checkpoints" / epoch_dir(epoch), s.w, s.theta);
    }
  }
  s.metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (options.out_dir) write_checkpoint(*options.out_dir, s.w, s.theta);
  return {std::move(s.w), std::move(s.theta), std::move(s.metrics)};
}

}  // namespace

TrainResult train(const DataSplit& data, const TrainConfig& cfg, const TrainOptions& options) {
  if (cfg.fixed_strategy) return train_fixed_strategy(data, cfg, *cfg.fixed_strategy, options);
  RunState state = initial_state(data, cfg, options);
  Sgd target_opt(cfg.eta1, cfg.momentum, cfg.weight_decay, -1.0);
  Sgd strategy_opt(cfg.eta2, cfg.strategy_momentum, 0.0, +1.0);
  const ReinforceOptions reinforce_opts{cfg.mean_baseline};

  auto step = [&](RunState& s, const Batch& batch, std::size_t epoch, std::size_t b, bool update_w,
                  HistogramAccumulator& hist, MeanAccumulator& l1, MeanAccumulator& l2,
                  MeanAccumulator& l3, MeanAccumulator& l0, MeanAccumulator& grad_sq) {
    BatchStreams streams = BatchStreams::for_batch(cfg.seed, epoch, b);
    const ObjectiveEvaluation eval = evaluate_objective(batch, s.theta, s.w, cfg, streams);
    if (!cfg.freeze_strategy) {
      const ModelParams grad = reinforce_gradient(s.theta, cfg.space, batch.x, eval.sampled,
                                                  eval.breakdown.l0, reinforce_opts);
      strategy_opt.step(s.theta, grad);
      ++s.metrics.theta_updates;
      if (options.record_schedule) s.metrics.schedule.push_back('T');
    }
    if (update_w) {
      grad_sq.add(eval.w_gradient.squared_norm());
      target_opt.step(s.w, eval.w_gradient);
      ++s.metrics.w_updates;
      if (options.record_schedule) s.metrics.schedule.push_back('W');
    }
    for (const auto& a : eval.sampled) hist.add(a.strategy);
    l1.add(eval.breakdown.l1);
    l2.add(eval.breakdown.l2);
    l3.add(eval.breakdown.l3);
    l0.add(eval.breakdown.l0);
  };
  return run_loop(data, cfg, options, std::move(state), HistogramAccumulator(cfg.space), step);
}

TrainResult train_fixed_strategy(const DataSplit& data, const TrainConfig& cfg,
                                 const FixedStrategy& a, const TrainOptions& options) {
  RunState state = initial_state(data, cfg, options);
  Sgd target_opt(cfg.eta1, cfg.momentum, cfg.weight_decay, -1.0);
  const StrategySpace space = StrategySpace::singleton(a.epsilon, a.step, a.iterations);
  space.validate();
  const AttackStrategy strategy = space.at(0, 0, 0);
  const AttackOptions attack_opts{cfg.random_start};

  auto step = [&](RunState& s, const Batch& batch, std::size_t epoch, std::size_t b, bool update_w,
                  HistogramAccumulator& hist, MeanAccumulator& l1, MeanAccumulator&,
                  MeanAccumulator&, MeanAccumulator&, MeanAccumulator& grad_sq) {
    if (!update_w) return;
    BatchStreams streams = BatchStreams::for_batch(cfg.seed, epoch, b);
    const std::vector<AttackStrategy> strategies(batch.size(), strategy);
    const auto adv = pgd_attack(batch.x, batch.y, strategies, space, s.w, streams.attack, attack_opts);
    const Lookahead look = one_step_update(s.w, adv.x_adv, batch.y, cfg.eta1);
    l1.add(per_sample_cross_entropy(target_forward(s.w, adv.x_adv), batch.y));
    grad_sq.add(look.gradient.squared_norm());
    target_opt.step(s.w, look.gradient);
    ++s.metrics.w_updates;
    if (options.record_schedule) s.metrics.schedule.push_back('W');
    for (std::size_t i = 0; i < batch.size(); ++i) hist.add(strategy);
  };
  return run_loop(data, cfg, options, std::move(state), HistogramAccumulator(a), step);
}

}  // namespace lasforge
