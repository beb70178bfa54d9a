#include <doctest.h>

#include <cmath>
#include <vector>

#include "lasforge/autodiff.hpp"
#include "lasforge/errors.hpp"
#include "oracles.hpp"

using namespace lasforge;

namespace {

struct OpCase {
  OpKind kind;
  std::vector<Shape> inputs;
  OpAttributes attrs;
  double lo = -1.0;
  double hi = 1.0;
};

// Scalar probe: sum(op(inputs) * r) for a fixed random r, so the whole Jacobian is exercised.
double probe(const OpCase& c, const std::vector<Tensor>& values, const Tensor& r,
             std::vector<std::vector<double>>* grads) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& v : values) vars.push_back(tape.leaf(v, true));
  const Var out = op_forward(c.kind, vars, c.attrs);
  const Var loss = out.value().size() == 1 ? scale(out, r.data[0]) : sum(mul(out, tape.constant(r)));
  tape.backward(loss);
  if (grads) {
    grads->clear();
    for (const auto& v : vars) grads->push_back(tape.grad(v).data);
  }
  return tape.value(loss).data[0];
}

Shape output_shape(const OpCase& c, const std::vector<Tensor>& values) {
  Tape tape;
  std::vector<Var> vars;
  for (const auto& v : values) vars.push_back(tape.constant(v));
  return op_forward(c.kind, vars, c.attrs).shape();
}

void check_op(const OpCase& c, Rng& rng) {
  std::vector<Tensor> values;
  for (const auto& s : c.inputs) values.push_back(oracle::random_tensor(s, rng, c.lo, c.hi));
  const Tensor r = oracle::random_tensor(output_shape(c, values), rng);
  std::vector<std::vector<double>> analytic;
  probe(c, values, r, &analytic);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto f = [&](const std::vector<double>& flat) {
      std::vector<Tensor> v = values;
      v[i].data = flat;
      return probe(c, v, r, nullptr);
    };
    const auto numeric = oracle::fd_gradient(f, values[i].data);
    const double err = oracle::rel_error(analytic[i], numeric);
    INFO(op_name(c.kind), " input ", i);
    CHECK(err < 1e-6);
  }
}

}  // namespace

TEST_CASE("every op's gradient matches central differences") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.below(4), m = 1 + rng.below(5), k = 1 + rng.below(4);
    const std::vector<std::size_t> cols = [&] {
      std::vector<std::size_t> p(n);
      for (auto& v : p) v = rng.below(m);
      return p;
    }();
    const std::vector<OpCase> cases{
        {OpKind::matmul, {{n, k}, {k, m}}, {}},
        {OpKind::add, {{n, m}, {n, m}}, {}},
        {OpKind::add, {{n, m}, {m}}, {}},
        {OpKind::add, {{n, m}, {1, m}}, {}},
        {OpKind::mul, {{n, m}, {n, m}}, {}},
        {OpKind::relu, {{n, m}}, {}},
        {OpKind::softmax, {{n, m}}, {}, -3.0, 3.0},
        {OpKind::log, {{n, m}}, {}, 0.2, 3.0},
        {OpKind::sum, {{n, m}}, {}},
        {OpKind::mean, {{n, m}}, {}},
        {OpKind::clamp, {{n, m}}, {-0.4, 0.5, 1.0, {}}},
        {OpKind::scale, {{n, m}}, {0.0, 1.0, -1.7, {}}},
        {OpKind::log_softmax, {{n, m + 2}}, {0.0, 1.0, 1.0, {1, m + 1}}, -3.0, 3.0},
        {OpKind::log_softmax, {{n, m}}, {}, -3.0, 3.0},
        {OpKind::pick, {{n, m}}, {0.0, 1.0, 1.0, cols}},
    };
    for (const auto& c : cases) check_op(c, rng);
  }
}

TEST_CASE("full MLP cross-entropy gradient matches central differences") {
  Rng rng(12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(4), d = 1 + rng.below(3), h = 2 + rng.below(4), c = 2 + rng.below(3);
    std::vector<Tensor> params{oracle::random_tensor({d, h}, rng), oracle::random_tensor({h}, rng),
                               oracle::random_tensor({h, h}, rng), oracle::random_tensor({h}, rng),
                               oracle::random_tensor({h, c}, rng), oracle::random_tensor({c}, rng)};
    const Tensor x = oracle::random_tensor({n, d}, rng, 0.0, 1.0);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng.below(c);

    auto forward = [&](const std::vector<Tensor>& p, std::vector<std::vector<double>>* grads) {
      Tape tape;
      std::vector<Var> v;
      for (const auto& t : p) v.push_back(tape.leaf(t, true));
      Var a = tape.constant(x);
      for (std::size_t l = 0; l < 3; ++l) {
        a = add(matmul(a, v[2 * l]), v[2 * l + 1]);
        if (l < 2) a = relu(a);
      }
      const std::vector<std::size_t> seg{c};
      const Var loss = scale(mean(pick(log_softmax(a, seg), y)), -1.0);
      tape.backward(loss);
      if (grads) {
        for (const auto& var : v) grads->push_back(tape.grad(var).data);
      }
      return tape.value(loss).data[0];
    };
    std::vector<std::vector<double>> analytic;
    forward(params, &analytic);
    std::vector<double> flat_a, flat_n;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto f = [&](const std::vector<double>& flat) {
        auto p = params;
        p[i].data = flat;
        return forward(p, nullptr);
      };
      const auto g = oracle::fd_gradient(f, params[i].data);
      flat_n.insert(flat_n.end(), g.begin(), g.end());
      flat_a.insert(flat_a.end(), analytic[i].begin(), analytic[i].end());
    }
    CHECK(oracle::rel_error(flat_a, flat_n) < 1e-6);

    // Also against the directly written softmax cross-entropy.
    double direct = 0.0;
    Tape tape;
    std::vector<Var> v;
    for (const auto& t : params) v.push_back(tape.constant(t));
    Var a = tape.constant(x);
    for (std::size_t l = 0; l < 3; ++l) {
      a = add(matmul(a, v[2 * l]), v[2 * l + 1]);
      if (l < 2) a = relu(a);
    }
    for (std::size_t i = 0; i < n; ++i) {
      direct += oracle::cross_entropy_row({a.value().row(i).begin(), a.value().row(i).end()}, y[i]);
    }
    CHECK(forward(params, nullptr) == doctest::Approx(direct / static_cast<double>(n)).epsilon(1e-12));
  }
}

TEST_CASE("forward values of the primitive ops") {
  Tape t;
  const Var a = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  const Var b = t.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  CHECK(matmul(a, b).value().data == std::vector<double>{19, 22, 43, 50});
  CHECK(add(a, t.constant(Tensor({2}, {10, 20}))).value().data == std::vector<double>{11, 22, 13, 24});
  CHECK(relu(t.constant(Tensor::matrix(1, 3, {-1, 0, 2}))).value().data == std::vector<double>{0, 0, 2});
  CHECK(sum(a).value().data[0] == 10.0);
  CHECK(mean(a).value().data[0] == 2.5);
  CHECK(clamp(a, 1.5, 3.5).value().data == std::vector<double>{1.5, 2, 3, 3.5});
  const std::vector<std::size_t> cols{1, 0};
  CHECK(pick(a, cols).value().data == std::vector<double>{2, 3});
  CHECK(pick(a, cols).shape() == Shape{2, 1});
  const auto sm = softmax(a).value();
  CHECK(sm(0, 0) + sm(0, 1) == doctest::Approx(1.0));
  CHECK(sm(0, 1) == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  const std::vector<std::size_t> seg{1, 1};
  CHECK(log_softmax(a, seg).value().data == std::vector<double>{0, 0, 0, 0});
}

TEST_CASE("softmax stays finite for large logits") {
  Tape t;
  const Var a = t.leaf(Tensor::matrix(1, 3, {1000.0, 0.0, -1000.0}));
  const Var s = softmax(a);
  CHECK(s.value().data[0] == doctest::Approx(1.0));
  const Var ls = log_softmax(a);
  CHECK(std::isfinite(ls.value().data[2]));
}

TEST_CASE("shape errors name the shapes") {
  Tape t;
  const Var a = t.constant(Tensor::zeros({2, 3}));
  const Var b = t.constant(Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_WITH(matmul(a, b), doctest::Contains("[2,3]"));
  CHECK_THROWS_AS(add(a, t.constant(Tensor::zeros({4}))), ShapeError);
  CHECK_THROWS_AS(mul(a, t.constant(Tensor::zeros({3, 2}))), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), ShapeError);
}

TEST_CASE("non-finite values raise NumericalError") {
  Tape t;
  CHECK_THROWS_AS(log(t.leaf(Tensor::matrix(1, 2, {1.0, 0.0}))), NumericalError);
  CHECK_THROWS_AS(log(t.leaf(Tensor::matrix(1, 1, {-1.0}))), NumericalError);
  const Var big = t.leaf(Tensor::matrix(1, 1, {1e200}));
  CHECK_THROWS_AS(mul(big, big), NumericalError);
}

TEST_CASE("backward semantics") {
  SUBCASE("grad of an unreachable node throws") {
    Tape t;
    const Var a = t.leaf(Tensor::scalar(2.0));
    const Var b = t.leaf(Tensor::scalar(3.0));
    t.backward(scale(a, 2.0));
    CHECK(t.grad(a).data[0] == 2.0);
    CHECK_THROWS(t.grad(b));
  }
  SUBCASE("non-scalar root is rejected") {
    Tape t;
    const Var a = t.leaf(Tensor::zeros({2, 2}));
    CHECK_THROWS_AS(t.backward(a), ShapeError);
  }
  SUBCASE("backward twice gives the same gradient") {
    Tape t;
    const Var a = t.leaf(Tensor::matrix(1, 2, {1.0, 2.0}));
    const Var l = sum(mul(a, a));
    t.backward(l);
    const auto g1 = t.grad(a);
    t.backward(l);
    CHECK(t.grad(a) == g1);
    CHECK(g1.data == std::vector<double>{2.0, 4.0});
  }
  SUBCASE("shared subexpressions accumulate") {
    Tape t;
    const Var a = t.leaf(Tensor::scalar(3.0));
    const Var b = add(a, a);
    t.backward(mul(b, a));  // 2a^2 -> 4a
    CHECK(t.grad(a).data[0] == 12.0);
  }
  SUBCASE("constants receive no gradient and are not visited") {
    Tape t;
    const Var w = t.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
    const Var x = t.leaf(Tensor::matrix(1, 2, {1, 1}));
    const Var y = sum(matmul(x, w));
    t.backward(y);
    CHECK_FALSE(t.has_grad(w));
    CHECK(t.grad(x).data == std::vector<double>{3, 7});
  }
  SUBCASE("foreign tape operands are rejected") {
    Tape t1, t2;
    const Var a = t1.leaf(Tensor::scalar(1.0));
    const Var b = t2.leaf(Tensor::scalar(1.0));
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(t2.backward(a), std::invalid_argument);
  }
  SUBCASE("clamp gradient is one strictly inside and zero at the bounds") {
    Tape t;
    const Var a = t.leaf(Tensor::matrix(1, 3, {0.0, 0.5, 1.0}));
    t.backward(sum(clamp(a, 0.0, 1.0)));
    CHECK(t.grad(a).data == std::vector<double>{0.0, 1.0, 0.0});
  }
}

TEST_CASE("input_gradient leaves parameters ungraded") {
  Tape t;
  const Var w = t.constant(Tensor::matrix(2, 1, {2.0, -1.0}));
  const Var x = t.leaf(Tensor::matrix(1, 2, {0.3, 0.4}));
  const Var loss = sum(matmul(x, w));
  const Tensor g = input_gradient(loss, x);
  CHECK(g.data == std::vector<double>{2.0, -1.0});
  CHECK_FALSE(t.has_grad(w));
  const Var c = t.constant(Tensor::matrix(1, 2, {0.0, 0.0}));
  CHECK_THROWS_AS(input_gradient(loss, c), std::invalid_argument);
}
