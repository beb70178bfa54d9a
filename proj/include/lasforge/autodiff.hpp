#pragma once

// Minimal reverse-mode automatic differentiation over dense row-major tensors.
//
// A Tape records one forward evaluation. Leaves are registered with
// Tape::leaf; every op returns a Var that refers to a node on the same tape.
// Tape::backward(root) fills gradients for every reachable node that requires
// them. Tapes are meant to be built, differentiated once, and discarded.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "lasforge/errors.hpp"

namespace lasforge {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rank() const noexcept { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }

  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);

  bool operator==(const Tensor& other) const = default;
};

enum class OpKind {
  matmul,
  add,
  relu,
  softmax,
  log,
  sum,
  mean,
  mul,
  clamp,
  log_softmax,
  pick,
  scale,
};

std::string_view op_name(OpKind kind);

class Tape;

class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  // Populates gradients of `root` (must be a scalar on this tape). Previous
  // gradients on the tape are cleared first.
  void backward(Var root);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const;

  // True once backward reached v with a gradient contribution.
  bool has_grad(Var v) const;

  // d root / d v. Throws when v was not reached by the last backward.
  Tensor grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  // Backward traversal bookkeeping, for tests: number of backward rules run
  // by the last backward call.
  std::size_t visited() const noexcept { return visited_; }

  // Low-level interface used by the op implementations.
  Var record(OpKind kind, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  const Tensor& node_value(std::size_t id) const { return nodes_[id].value; }
  const std::vector<double>& node_grad(std::size_t id) const { return nodes_[id].grad; }
  bool node_requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::vector<std::size_t>& node_inputs(std::size_t id) const { return nodes_[id].inputs; }
  // Zero-initialized on first access.
  std::vector<double>& grad_buffer(std::size_t id);

 private:
  struct Node {
    OpKind kind = OpKind::sum;
    Tensor value;
    std::vector<double> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool leaf = false;
  };

  void check_owned(Var v, const char* what) const;

  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

// Ops. All inputs must live on the same tape. Shape errors name the op and
// both shapes.
Var matmul(Var a, Var b);                 // [n,k]·[k,m] -> [n,m]
Var add(Var a, Var b);                    // same shape, or [n,m] + [1,m] / [m] bias row
Var mul(Var a, Var b);                    // elementwise, same shape
Var relu(Var a);
Var softmax(Var a);                       // row-wise over the last axis
Var log(Var a);                           // inputs must be > 0
Var sum(Var a);                           // -> scalar
Var mean(Var a);                          // -> scalar
Var clamp(Var a, double lo, double hi);   // gradient 1 strictly inside (lo, hi), else 0
Var scale(Var a, double factor);
// Row-wise log-softmax. With `segments`, each row is split into consecutive
// slices of those lengths and each slice is normalized independently.
Var log_softmax(Var a, std::span<const std::size_t> segments = {});
// out[i,0] = a[i, columns[i]]
Var pick(Var a, std::span<const std::size_t> columns);

struct OpAttributes {
  double lo = 0.0;
  double hi = 1.0;
  double factor = 1.0;
  std::vector<std::size_t> indices;  // pick columns or log_softmax segments
};

// Generic entry point dispatching on the op kind.
Var op_forward(OpKind kind, std::span<const Var> inputs, const OpAttributes& attrs = {});

// d loss / d x, leaving the gradients of every other leaf untouched in the
// caller's parameter state (parameters are expected to be tape constants).
Tensor input_gradient(Var loss, Var x);

}  // namespace lasforge
