#include "lasforge/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lasforge/kernels.hpp"

namespace lasforge {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  for (std::size_t dim : shape) {
    if (dim == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != data.size()) {
    throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

std::size_t Tensor::rows() const { return shape.size() == 2 ? shape[0] : 1; }

std::size_t Tensor::cols() const { return shape.empty() ? 0 : shape.back(); }

std::span<const double> Tensor::row(std::size_t i) const {
  return std::span<const double>(data).subspan(i * cols(), cols());
}

std::span<double> Tensor::row(std::size_t i) {
  return std::span<double>(data).subspan(i * cols(), cols());
}

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::relu: return "relu";
    case OpKind::softmax: return "softmax";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::mul: return "mul";
    case OpKind::clamp: return "clamp";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::pick: return "pick";
    case OpKind::scale: return "scale";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!tape_) throw std::logic_error("use of an unbound Var");
  return tape_->value(*this);
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  for (double v : value.data) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string("non-finite value produced by ") +
                           std::string(op_name(kind)));
    }
  }
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(),
                                   [this](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v, const char* what) const {
  if (v.tape() != this || v.id() >= nodes_.size()) {
    throw std::invalid_argument(std::string(what) + ": tensor is not on this tape");
  }
}

const Tensor& Tape::value(Var v) const {
  check_owned(v, "value");
  return nodes_[v.id()].value;
}

bool Tape::requires_grad(Var v) const {
  check_owned(v, "requires_grad");
  return nodes_[v.id()].requires_grad;
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  Node& node = nodes_[id];
  if (node.grad.empty()) node.grad.assign(node.value.size(), 0.0);
  return node.grad;
}

void Tape::backward(Var root) {
  check_owned(root, "backward");
  if (nodes_[root.id()].value.size() != 1) {
    throw ShapeError("backward requires a scalar root, got shape " +
                     shape_string(nodes_[root.id()].value.shape));
  }
  for (Node& node : nodes_) node.grad.clear();
  visited_ = 0;
  if (!nodes_[root.id()].requires_grad) return;
  grad_buffer(root.id())[0] = 1.0;
  // Node ids are a topological order: inputs are always recorded first.
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (node.grad.empty() || !node.backward) continue;
    node.backward(*this, id);
    ++visited_;
  }
}

bool Tape::has_grad(Var v) const {
  check_owned(v, "has_grad");
  return !nodes_[v.id()].grad.empty();
}

Tensor Tape::grad(Var v) const {
  check_owned(v, "grad");
  const Node& node = nodes_[v.id()];
  if (node.grad.empty()) {
    throw std::invalid_argument("tensor is not connected to the differentiated root");
  }
  return Tensor(node.value.shape, node.grad);
}

namespace {

Tape& same_tape(Var a, Var b, OpKind kind) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": operands live on different tapes");
  }
  return *a.tape();
}

Tape& tape_of(Var a, OpKind kind) {
  if (!a.valid()) throw std::invalid_argument(std::string(op_name(kind)) + ": unbound operand");
  return *a.tape();
}

[[noreturn]] void mismatch(OpKind kind, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op_name(kind)) + ": incompatible shapes " + shape_string(a) +
                   " and " + shape_string(b));
}

void accumulate(Tape& tape, std::size_t id, std::span<const double> g) {
  if (!tape.node_requires_grad(id)) return;
  auto& buf = tape.grad_buffer(id);
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

bool is_matrix(const Shape& s) { return s.size() == 2; }

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = same_tape(a, b, OpKind::matmul);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!is_matrix(av.shape) || !is_matrix(bv.shape) || av.shape[1] != bv.shape[0]) {
    mismatch(OpKind::matmul, av.shape, bv.shape);
  }
  const std::size_t n = av.shape[0], k = av.shape[1], m = bv.shape[1];
  Tensor out = Tensor::zeros({n, m});
  kernels::gemm_nn(av.data, bv.data, out.data, n, k, m);
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::matmul, std::move(out), {ia, ib},
                     [ia, ib, n, k, m](Tape& t, std::size_t self) {
                       const auto& g = t.node_grad(self);
                       if (t.node_requires_grad(ia)) {
                         // dA = G · B^T
                         std::vector<double> da(n * k);
                         kernels::gemm_nt(g, t.node_value(ib).data, da, n, m, k);
                         accumulate(t, ia, da);
                       }
                       if (t.node_requires_grad(ib)) {
                         // dB += A^T · G
                         auto& db = t.grad_buffer(ib);
                         kernels::gemm_tn_acc(t.node_value(ia).data, g, db, n, k, m);
                       }
                     });
}

Var add(Var a, Var b) {
  Tape& tape = same_tape(a, b, OpKind::add);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t ia = a.id(), ib = b.id();
  if (av.shape == bv.shape) {
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
    return tape.record(OpKind::add, std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
      const auto& g = t.node_grad(self);
      accumulate(t, ia, g);
      accumulate(t, ib, g);
    });
  }
  const bool bias_row = is_matrix(av.shape) &&
                        ((bv.shape.size() == 1 && bv.shape[0] == av.shape[1]) ||
                         (is_matrix(bv.shape) && bv.shape[0] == 1 && bv.shape[1] == av.shape[1]));
  if (!bias_row) mismatch(OpKind::add, av.shape, bv.shape);
  const std::size_t n = av.shape[0], m = av.shape[1];
  Tensor out = av;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) out.data[i * m + j] += bv.data[j];
  }
  return tape.record(OpKind::add, std::move(out), {ia, ib},
                     [ia, ib, n, m](Tape& t, std::size_t self) {
                       const auto& g = t.node_grad(self);
                       accumulate(t, ia, g);
                       if (t.node_requires_grad(ib)) {
                         auto& db = t.grad_buffer(ib);
                         for (std::size_t i = 0; i < n; ++i) {
                           for (std::size_t j = 0; j < m; ++j) db[j] += g[i * m + j];
                         }
                       }
                     });
}

Var mul(Var a, Var b) {
  Tape& tape = same_tape(a, b, OpKind::mul);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.shape != bv.shape) mismatch(OpKind::mul, av.shape, bv.shape);
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= bv.data[i];
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(OpKind::mul, std::move(out), {ia, ib}, [ia, ib](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& x = t.node_value(ia).data;
    const auto& y = t.node_value(ib).data;
    if (t.node_requires_grad(ia)) {
      auto& da = t.grad_buffer(ia);
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
    }
    if (t.node_requires_grad(ib)) {
      auto& db = t.grad_buffer(ib);
      for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * x[i];
    }
  });
}

Var relu(Var a) {
  Tape& tape = tape_of(a, OpKind::relu);
  Tensor out = a.value();
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  const std::size_t ia = a.id();
  return tape.record(OpKind::relu, std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& x = t.node_value(ia).data;
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > 0.0) da[i] += g[i];
    }
  });
}

namespace {

// Normalized segment layout for row-wise (log-)softmax.
std::vector<std::size_t> resolve_segments(const Shape& shape, std::span<const std::size_t> segments,
                                          OpKind kind) {
  const std::size_t width = shape.empty() ? 0 : shape.back();
  if (segments.empty()) return {width};
  std::size_t total = 0;
  for (std::size_t s : segments) {
    if (s == 0) throw ShapeError(std::string(op_name(kind)) + ": empty segment");
    total += s;
  }
  if (total != width) {
    throw ShapeError(std::string(op_name(kind)) + ": segments cover " + std::to_string(total) +
                     " columns of shape " + shape_string(shape));
  }
  return {segments.begin(), segments.end()};
}

}  // namespace

Var softmax(Var a) {
  Tape& tape = tape_of(a, OpKind::softmax);
  const Tensor& av = a.value();
  const std::size_t cols = av.cols();
  const std::size_t rows = av.size() / cols;
  Tensor out = av;
  for (std::size_t i = 0; i < rows; ++i) {
    double* r = out.data.data() + i * cols;
    const double mx = *std::max_element(r, r + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      r[j] = std::exp(r[j] - mx);
      z += r[j];
    }
    for (std::size_t j = 0; j < cols; ++j) r[j] /= z;
  }
  const std::size_t ia = a.id();
  return tape.record(OpKind::softmax, std::move(out), {ia},
                     [ia, rows, cols](Tape& t, std::size_t self) {
                       const auto& g = t.node_grad(self);
                       const auto& s = t.node_value(self).data;
                       auto& da = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < rows; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * s[i * cols + j];
                         for (std::size_t j = 0; j < cols; ++j) {
                           da[i * cols + j] += s[i * cols + j] * (g[i * cols + j] - dot);
                         }
                       }
                     });
}

Var log_softmax(Var a, std::span<const std::size_t> segments) {
  Tape& tape = tape_of(a, OpKind::log_softmax);
  const Tensor& av = a.value();
  const auto segs = resolve_segments(av.shape, segments, OpKind::log_softmax);
  const std::size_t cols = av.cols();
  const std::size_t rows = av.size() / cols;
  Tensor out = av;
  for (std::size_t i = 0; i < rows; ++i) {
    std::size_t offset = i * cols;
    for (std::size_t len : segs) {
      double* r = out.data.data() + offset;
      const double mx = *std::max_element(r, r + len);
      double z = 0.0;
      for (std::size_t j = 0; j < len; ++j) z += std::exp(r[j] - mx);
      const double lse = mx + std::log(z);
      for (std::size_t j = 0; j < len; ++j) r[j] -= lse;
      offset += len;
    }
  }
  const std::size_t ia = a.id();
  return tape.record(OpKind::log_softmax, std::move(out), {ia},
                     [ia, rows, cols, segs](Tape& t, std::size_t self) {
                       const auto& g = t.node_grad(self);
                       const auto& y = t.node_value(self).data;
                       auto& da = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < rows; ++i) {
                         std::size_t offset = i * cols;
                         for (std::size_t len : segs) {
                           double gs = 0.0;
                           for (std::size_t j = 0; j < len; ++j) gs += g[offset + j];
                           for (std::size_t j = 0; j < len; ++j) {
                             da[offset + j] += g[offset + j] - std::exp(y[offset + j]) * gs;
                           }
                           offset += len;
                         }
                       }
                     });
}

Var log(Var a) {
  Tape& tape = tape_of(a, OpKind::log);
  Tensor out = a.value();
  for (double& v : out.data) {
    if (!(v > 0.0)) throw NumericalError("log: non-positive input");
    v = std::log(v);
  }
  const std::size_t ia = a.id();
  return tape.record(OpKind::log, std::move(out), {ia}, [ia](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& x = t.node_value(ia).data;
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / x[i];
  });
}

Var sum(Var a) {
  Tape& tape = tape_of(a, OpKind::sum);
  const auto& x = a.value().data;
  double total = 0.0;
  for (double v : x) total += v;
  const std::size_t ia = a.id();
  return tape.record(OpKind::sum, Tensor::scalar(total), {ia}, [ia](Tape& t, std::size_t self) {
    const double g = t.node_grad(self)[0];
    auto& da = t.grad_buffer(ia);
    for (double& d : da) d += g;
  });
}

Var mean(Var a) {
  Tape& tape = tape_of(a, OpKind::mean);
  const auto& x = a.value().data;
  double total = 0.0;
  for (double v : x) total += v;
  const double n = static_cast<double>(x.size());
  const std::size_t ia = a.id();
  return tape.record(OpKind::mean, Tensor::scalar(total / n), {ia},
                     [ia, n](Tape& t, std::size_t self) {
                       const double g = t.node_grad(self)[0] / n;
                       auto& da = t.grad_buffer(ia);
                       for (double& d : da) d += g;
                     });
}

Var clamp(Var a, double lo, double hi) {
  Tape& tape = tape_of(a, OpKind::clamp);
  if (!(lo <= hi)) throw std::invalid_argument("clamp: lo must not exceed hi");
  Tensor out = a.value();
  for (double& v : out.data) v = std::min(std::max(v, lo), hi);
  const std::size_t ia = a.id();
  return tape.record(OpKind::clamp, std::move(out), {ia}, [ia, lo, hi](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    const auto& x = t.node_value(ia).data;
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) da[i] += g[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tape& tape = tape_of(a, OpKind::scale);
  Tensor out = a.value();
  for (double& v : out.data) v *= factor;
  const std::size_t ia = a.id();
  return tape.record(OpKind::scale, std::move(out), {ia}, [ia, factor](Tape& t, std::size_t self) {
    const auto& g = t.node_grad(self);
    auto& da = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * factor;
  });
}

Var pick(Var a, std::span<const std::size_t> columns) {
  Tape& tape = tape_of(a, OpKind::pick);
  const Tensor& av = a.value();
  if (!is_matrix(av.shape) || columns.size() != av.shape[0]) {
    mismatch(OpKind::pick, av.shape, Shape{columns.size()});
  }
  const std::size_t rows = av.shape[0], cols = av.shape[1];
  Tensor out = Tensor::zeros({rows, 1});
  for (std::size_t i = 0; i < rows; ++i) {
    if (columns[i] >= cols) {
      throw std::out_of_range("pick: column " + std::to_string(columns[i]) + " out of range for " +
                              shape_string(av.shape));
    }
    out.data[i] = av.data[i * cols + columns[i]];
  }
  std::vector<std::size_t> cols_copy(columns.begin(), columns.end());
  const std::size_t ia = a.id();
  return tape.record(OpKind::pick, std::move(out), {ia},
                     [ia, cols, cols_copy = std::move(cols_copy)](Tape& t, std::size_t self) {
                       const auto& g = t.node_grad(self);
                       auto& da = t.grad_buffer(ia);
                       for (std::size_t i = 0; i < cols_copy.size(); ++i) {
                         da[i * cols + cols_copy[i]] += g[i];
                       }
                     });
}

Var op_forward(OpKind kind, std::span<const Var> inputs, const OpAttributes& attrs) {
  const std::size_t arity = (kind == OpKind::matmul || kind == OpKind::add || kind == OpKind::mul) ? 2 : 1;
  if (inputs.size() != arity) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(arity) +
                                " inputs, got " + std::to_string(inputs.size()));
  }
  switch (kind) {
    case OpKind::matmul: return matmul(inputs[0], inputs[1]);
    case OpKind::add: return add(inputs[0], inputs[1]);
    case OpKind::mul: return mul(inputs[0], inputs[1]);
    case OpKind::relu: return relu(inputs[0]);
    case OpKind::softmax: return softmax(inputs[0]);
    case OpKind::log: return log(inputs[0]);
    case OpKind::sum: return sum(inputs[0]);
    case OpKind::mean: return mean(inputs[0]);
    case OpKind::clamp: return clamp(inputs[0], attrs.lo, attrs.hi);
    case OpKind::scale: return scale(inputs[0], attrs.factor);
    case OpKind::log_softmax: return log_softmax(inputs[0], attrs.indices);
    case OpKind::pick: return pick(inputs[0], attrs.indices);
  }
  throw std::invalid_argument("unknown op kind");
}

Tensor input_gradient(Var loss, Var x) {
  if (!loss.valid() || loss.tape() != x.tape()) {
    throw std::invalid_argument("input_gradient: loss and input live on different tapes");
  }
  Tape& tape = *loss.tape();
  if (!tape.requires_grad(x)) {
    throw std::invalid_argument("input_gradient: input does not require grad");
  }
  tape.backward(loss);
  if (!tape.has_grad(x)) {
    throw std::invalid_argument("input_gradient: input is not connected to the loss");
  }
  return tape.grad(x);
}

}  // namespace lasforge
