#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "lasforge/autodiff.hpp"

namespace lasforge {

// Fully connected ReLU network: input -> hidden... -> output (no output activation).
struct MlpSpec {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  std::size_t output = 0;

  std::vector<std::size_t> widths() const;
  void validate() const;
};

// Ordered named tensors. For an MLP the order is layer0.weight, layer0.bias,
// layer1.weight, ... with weights stored [in, out].
class ModelParams {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool operator==(const Entry&) const = default;
  };

  void add(std::string name, Tensor value);

  std::size_t count() const noexcept { return entries_.size(); }
  std::size_t total_size() const;
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Tensor& tensor(std::size_t i) { return entries_[i].value; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].value; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  std::vector<double> flatten() const;
  // New collection with this layout holding `values`.
  ModelParams unflatten(std::span<const double> values) const;

  ModelParams clone() const { return *this; }
  ModelParams zeros_like() const;

  // this += c * g, in place.
  void axpy(const ModelParams& g, double c);
  void scale(double c);

  double squared_norm() const;
  double norm() const;

  bool same_layout(const ModelParams& other) const;
  // Throws ShapeError naming the first mismatching entry.
  void require_layout(const ModelParams& other, const char* context) const;

  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<Entry> entries_;
};

// Fresh parameter collection p + c * g; p is untouched.
ModelParams axpy_update(const ModelParams& p, const ModelParams& g, double c);

// He-style fan-in uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)); zero
// biases. With `zero_output_layer` the final layer starts at exactly zero.
ModelParams init_mlp(const MlpSpec& spec, std::uint64_t seed, bool zero_output_layer = false);

// Recover the layer widths from an MLP parameter collection.
MlpSpec infer_spec(const ModelParams& params);

// Registers every parameter on the tape.
std::vector<Var> bind_params(Tape& tape, const ModelParams& params, bool requires_grad);
// Gradients of bound parameters, in the layout of `layout`.
ModelParams collect_gradients(const Tape& tape, std::span<const Var> vars, const ModelParams& layout);

Var mlp_forward(std::span<const Var> params, Var x);

// Logits of the target classifier, f_w(x).
Tensor target_forward(const ModelParams& w, const Tensor& x);

// Mean negative log-softmax of the true class.
Var cross_entropy(Var logits, std::span<const std::size_t> labels);
std::vector<double> per_sample_cross_entropy(const Tensor& logits,
                                             std::span<const std::size_t> labels);

std::vector<std::size_t> predict(const ModelParams& w, const Tensor& x);
double accuracy(const ModelParams& w, const Tensor& x, std::span<const std::size_t> labels);

// Layout of the strategy network output: M consecutive logit slices.
struct StrategyHeads {
  std::vector<std::size_t> sizes;

  std::size_t count() const noexcept { return sizes.size(); }
  std::size_t total() const;
  std::size_t offset(std::size_t head) const;
  void validate() const;
};

// Per-sample, per-head categorical probabilities, row-major [samples, heads.total()].
struct StrategyDistribution {
  StrategyHeads heads;
  std::size_t samples = 0;
  std::vector<double> probs;

  double prob(std::size_t sample, std::size_t head, std::size_t option) const;
  std::span<const double> head(std::size_t sample, std::size_t head) const;
  // Throws std::invalid_argument unless each head is a normalized positive vector.
  void validate(double tolerance = 1e-9) const;
};

StrategyDistribution strategy_forward(const ModelParams& theta, const StrategyHeads& heads,
                                      const Tensor& x);

// Text checkpoint format, see README. Values are printed with 17 significant
// digits so a load reproduces every bit.
void save_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_params(const std::filesystem::path& path);

}  // namespace lasforge
