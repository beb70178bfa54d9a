#include "lasforge/networks.hpp"

#include <algorithm>
#include <cmath>

#include "lasforge/kernels.hpp"
#include "lasforge/rng.hpp"

namespace lasforge {

std::vector<std::size_t> MlpSpec::widths() const {
  std::vector<std::size_t> w{input};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(output);
  return w;
}

void MlpSpec::validate() const {
  for (std::size_t w : widths()) {
    if (w == 0) throw std::invalid_argument("MLP layer widths must be positive");
  }
}

void ModelParams::add(std::string name, Tensor value) {
  entries_.push_back({std::move(name), std::move(value)});
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ModelParams::flatten() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& e : entries_) out.insert(out.end(), e.value.data.begin(), e.value.data.end());
  return out;
}

ModelParams ModelParams::unflatten(std::span<const double> values) const {
  if (values.size() != total_size()) {
    throw ShapeError("unflatten: expected " + std::to_string(total_size()) + " values, got " +
                     std::to_string(values.size()));
  }
  ModelParams out = *this;
  std::size_t offset = 0;
  for (auto& e : out.entries_) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), e.value.size(),
                e.value.data.begin());
    offset += e.value.size();
  }
  return out;
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  for (auto& e : out.entries_) std::fill(e.value.data.begin(), e.value.data.end(), 0.0);
  return out;
}

bool ModelParams::same_layout(const ModelParams& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].value.shape != other.entries_[i].value.shape) return false;
  }
  return true;
}

void ModelParams::require_layout(const ModelParams& other, const char* context) const {
  if (entries_.size() != other.entries_.size()) {
    throw ShapeError(std::string(context) + ": parameter counts differ (" +
                     std::to_string(entries_.size()) + " vs " +
                     std::to_string(other.entries_.size()) + ")");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].value.shape != other.entries_[i].value.shape) {
      throw ShapeError(std::string(context) + ": " + entries_[i].name + " has shape " +
                       shape_string(entries_[i].value.shape) + " but the update has " +
                       shape_string(other.entries_[i].value.shape));
    }
  }
}

void ModelParams::axpy(const ModelParams& g, double c) {
  require_layout(g, "axpy");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    kernels::axpy(c, g.entries_[i].value.data, entries_[i].value.data);
  }
}

void ModelParams::scale(double c) {
  for (auto& e : entries_) {
    for (double& v : e.value.data) v *= c;
  }
}

double ModelParams::squared_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) {
    for (double v : e.value.data) s += v * v;
  }
  return s;
}

double ModelParams::norm() const { return std::sqrt(squared_norm()); }

ModelParams axpy_update(const ModelParams& p, const ModelParams& g, double c) {
  ModelParams out = p.clone();
  out.axpy(g, c);
  return out;
}

ModelParams init_mlp(const MlpSpec& spec, std::uint64_t seed, bool zero_output_layer) {
  spec.validate();
  Rng rng(seed);
  const auto widths = spec.widths();
  ModelParams params;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    Tensor w = Tensor::zeros({fan_in, fan_out});
    const bool last = l + 2 == widths.size();
    if (!(last && zero_output_layer)) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (double& v : w.data) v = rng.uniform(-bound, bound);
    }
    params.add("layer" + std::to_string(l) + ".weight", std::move(w));
    params.add("layer" + std::to_string(l) + ".bias", Tensor::zeros({fan_out}));
  }
  return params;
}

MlpSpec infer_spec(const ModelParams& params) {
  if (params.count() == 0 || params.count() % 2 != 0) {
    throw ShapeError("MLP parameters must come in weight/bias pairs");
  }
  MlpSpec spec;
  for (std::size_t i = 0; i < params.count(); i += 2) {
    const Tensor& w = params.tensor(i);
    const Tensor& b = params.tensor(i + 1);
    if (w.rank() != 2 || b.rank() != 1 || b.shape[0] != w.shape[1]) {
      throw ShapeError("layer " + std::to_string(i / 2) + " has weight " + shape_string(w.shape) +
                       " and bias " + shape_string(b.shape));
    }
    if (i == 0) {
      spec.input = w.shape[0];
    } else if (w.shape[0] != params.tensor(i - 2).shape[1]) {
      throw ShapeError("layer " + std::to_string(i / 2) + " input width does not chain");
    }
    if (i + 2 < params.count()) spec.hidden.push_back(w.shape[1]);
    else spec.output = w.shape[1];
  }
  return spec;
}

std::vector<Var> bind_params(Tape& tape, const ModelParams& params, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.count());
  for (const auto& e : params.entries()) vars.push_back(tape.leaf(e.value, requires_grad));
  return vars;
}

ModelParams collect_gradients(const Tape& tape, std::span<const Var> vars,
                              const ModelParams& layout) {
  ModelParams grads = layout.zeros_like();
  for (std::size_t i = 0; i < vars.size(); ++i) {
    if (tape.has_grad(vars[i])) grads.tensor(i) = tape.grad(vars[i]);
  }
  return grads;
}

Var mlp_forward(std::span<const Var> params, Var x) {
  if (params.empty() || params.size() % 2 != 0) {
    throw ShapeError("mlp_forward: parameters must come in weight/bias pairs");
  }
  if (x.shape().size() != 2 || x.shape()[1] != params[0].shape()[0]) {
    throw ShapeError("mlp_forward: input " + shape_string(x.shape()) + " does not match layer0 " +
                     shape_string(params[0].shape()));
  }
  Var h = x;
  for (std::size_t i = 0; i < params.size(); i += 2) {
    h = add(matmul(h, params[i]), params[i + 1]);
    if (i + 2 < params.size()) h = relu(h);
  }
  return h;
}

Tensor target_forward(const ModelParams& w, const Tensor& x) {
  Tape tape;
  const auto vars = bind_params(tape, w, false);
  return mlp_forward(vars, tape.constant(x)).value();
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_string(s) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  for (std::size_t y : labels) {
    if (y >= s[1]) throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " out of range");
  }
  return scale(mean(pick(log_softmax(logits), labels)), -1.0);
}

std::vector<double> per_sample_cross_entropy(const Tensor& logits,
                                             std::span<const std::size_t> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size()) {
    throw ShapeError("cross_entropy: logits " + shape_string(logits.shape) + " for " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t c = logits.cols();
  std::vector<double> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= c) throw std::out_of_range("cross_entropy: label out of range");
    const auto r = logits.row(i);
    const double mx = *std::max_element(r.begin(), r.end());
    double z = 0.0;
    for (double v : r) z += std::exp(v - mx);
    out[i] = mx + std::log(z) - r[labels[i]];
  }
  return out;
}

std::vector<std::size_t> predict(const ModelParams& w, const Tensor& x) {
  const Tensor logits = target_forward(w, x);
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto r = logits.row(i);
    out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

double accuracy(const ModelParams& w, const Tensor& x, std::span<const std::size_t> labels) {
  const auto pred = predict(w, x);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

std::size_t StrategyHeads::total() const {
  std::size_t t = 0;
  for (std::size_t s : sizes) t += s;
  return t;
}

std::size_t StrategyHeads::offset(std::size_t head) const {
  std::size_t o = 0;
  for (std::size_t m = 0; m < head; ++m) o += sizes[m];
  return o;
}

void StrategyHeads::validate() const {
  if (sizes.empty()) throw std::invalid_argument("strategy heads: need at least one head");
  for (std::size_t s : sizes) {
    if (s == 0) throw std::invalid_argument("strategy heads: every head needs an option");
  }
}

double StrategyDistribution::prob(std::size_t sample, std::size_t h, std::size_t option) const {
  return probs[sample * heads.total() + heads.offset(h) + option];
}

std::span<const double> StrategyDistribution::head(std::size_t sample, std::size_t h) const {
  return std::span<const double>(probs).subspan(sample * heads.total() + heads.offset(h),
                                                heads.sizes[h]);
}

void StrategyDistribution::validate(double tolerance) const {
  if (probs.size() != samples * heads.total()) {
    throw std::invalid_argument("strategy distribution: size does not match heads");
  }
  for (std::size_t n = 0; n < samples; ++n) {
    for (std::size_t m = 0; m < heads.count(); ++m) {
      double total = 0.0;
      for (double p : head(n, m)) {
        if (!(p >= 0.0)) throw std::invalid_argument("strategy distribution: negative probability");
        total += p;
      }
      if (std::abs(total - 1.0) > tolerance) {
        throw std::invalid_argument("strategy distribution: head " + std::to_string(m) +
                                    " of sample " + std::to_string(n) + " sums to " +
                                    std::to_string(total));
      }
    }
  }
}

StrategyDistribution strategy_forward(const ModelParams& theta, const StrategyHeads& heads,
                                      const Tensor& x) {
  heads.validate();
  const Tensor logits = target_forward(theta, x);
  if (logits.cols() != heads.total()) {
    throw ShapeError("strategy network emits " + std::to_string(logits.cols()) +
                     " logits but the heads need " + std::to_string(heads.total()));
  }
  StrategyDistribution dist;
  dist.heads = heads;
  dist.samples = logits.rows();
  dist.probs = logits.data;
  const std::size_t width = heads.total();
  for (std::size_t n = 0; n < dist.samples; ++n) {
    std::size_t offset = n * width;
    for (std::size_t len : heads.sizes) {
      double* r = dist.probs.data() + offset;
      const double mx = *std::max_element(r, r + len);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        r[j] = std::exp(r[j] - mx);
        z += r[j];
      }
      for (std::size_t j = 0; j < len; ++j) r[j] /= z;
      offset += len;
    }
  }
  return dist;
}

}  // namespace lasforge
