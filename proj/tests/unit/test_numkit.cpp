#include <doctest.h>

#include <cmath>

#include "msvae/adam.hpp"
#include "msvae/autodiff.hpp"
#include "msvae/matrix.hpp"
#include "msvae/mlp.hpp"
#include "test_support.hpp"

using namespace msvae;
using msvae::testing::bit_equal;
using msvae::testing::random_matrix;

namespace {

Matrix triple_loop(const Matrix& a, const Matrix& b) {
  Matrix c = Matrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) c(i, j) += a(i, k) * b(k, j);
  return c;
}

// Straight-line evaluation of a dense net, one scalar at a time.
Matrix straight_line_mlp(const std::vector<Matrix>& weights,
                         const std::vector<Matrix>& biases, const Matrix& x,
                         bool relu_hidden) {
  Matrix h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    Matrix next(h.rows(), weights[l].cols());
    for (Index r = 0; r < h.rows(); ++r) {
      for (Index o = 0; o < weights[l].cols(); ++o) {
        double acc = biases[l](0, o);
        for (Index i = 0; i < h.cols(); ++i) acc += h(r, i) * weights[l](i, o);
        if (l + 1 < weights.size()) {
          acc = relu_hidden ? (acc > 0.0 ? acc : 0.0) : std::tanh(acc);
        }
        next(r, o) = acc;
      }
    }
    h = next;
  }
  return h;
}

}  // namespace

TEST_CASE("matmul: identity, hand example, loop oracle") {
  Rng rng(1);
  const Matrix a = random_matrix(3, 3, rng);
  CHECK(matmul(Matrix::Identity(3, 3), a).isApprox(a, 0.0));

  Matrix l(2, 2), r(2, 1), want(2, 1);
  l << 1, 2, 3, 4;
  r << 0, 1;
  want << 2, 4;
  CHECK(matmul(l, r) == want);

  const Matrix x = random_matrix(5, 4, rng);
  const Matrix y = random_matrix(4, 3, rng);
  const Matrix got = matmul(x, y);
  CHECK(got.rows() == 5);
  CHECK(got.cols() == 3);
  CHECK((got - triple_loop(x, y)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("matmul: shape mismatch names both shapes") {
  Matrix a(2, 3), b(2, 3);
  try {
    (void)matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("(2x3)") != std::string::npos);
  }
}

TEST_CASE("matmul: associativity on random conforming triples") {
  Rng rng(7);
  std::uniform_int_distribution<int> dim(1, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const Index m = dim(rng), k = dim(rng), p = dim(rng), q = dim(rng);
    const Matrix a = random_matrix(m, k, rng);
    const Matrix b = random_matrix(k, p, rng);
    const Matrix c = random_matrix(p, q, rng);
    const Matrix left = matmul(matmul(a, b), c);
    const Matrix right = matmul(a, matmul(b, c));
    CHECK((left - right).norm() <= 1e-9 * std::max(1.0, left.norm()));
  }
}

TEST_CASE("mlp_forward: zero weights give the bias on every row") {
  MlpSpec spec{{4, 3}, Activation::kRelu};
  Matrix bias(1, 3);
  bias << 0.5, -1.0, 2.0;
  std::vector<Param> params{Param("w", Matrix::Zero(4, 3)), Param("b", bias)};
  Rng rng(2);
  const Matrix out = mlp_forward(spec, params, random_matrix(6, 4, rng));
  for (Index r = 0; r < out.rows(); ++r) CHECK(out.row(r) == bias.row(0));
}

TEST_CASE("mlp_forward: single identity layer is the identity") {
  MlpSpec spec{{5, 5}, Activation::kTanh};
  std::vector<Param> params{Param("w", Matrix::Identity(5, 5)),
                            Param("b", Matrix::Zero(1, 5))};
  Rng rng(3);
  const Matrix x = random_matrix(4, 5, rng);
  CHECK(mlp_forward(spec, params, x) == x);
}

TEST_CASE("mlp_forward: two-layer net matches straight-line oracle") {
  Rng rng(4);
  for (Activation act : {Activation::kRelu, Activation::kTanh}) {
    MlpSpec spec{{6, 7, 3}, act};
    Mlp net = Mlp::create(spec, rng, "net");
    for (DenseLayer& l : net.layers()) l.bias.value = random_matrix(1, l.out_width(), rng);
    std::vector<Param> flat;
    std::vector<Matrix> ws, bs;
    for (const DenseLayer& l : net.layers()) {
      flat.push_back(l.weight);
      flat.push_back(l.bias);
      ws.push_back(l.weight.value);
      bs.push_back(l.bias.value);
    }
    const Matrix x = random_matrix(9, 6, rng);
    const Matrix oracle =
        straight_line_mlp(ws, bs, x, act == Activation::kRelu);
    CHECK((mlp_forward(spec, flat, x) - oracle).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((net.forward(x) - oracle).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("mlp_forward: width mismatch") {
  MlpSpec spec{{3, 2}, Activation::kRelu};
  std::vector<Param> params{Param("w", Matrix::Zero(3, 2)),
                            Param("b", Matrix::Zero(1, 2))};
  CHECK_THROWS_AS(mlp_forward(spec, params, Matrix::Zero(2, 4)), DimensionError);
  std::vector<Param> short_list{params[0]};
  CHECK_THROWS_AS(mlp_forward(spec, short_list, Matrix::Zero(2, 3)),
                  DimensionError);
  CHECK_THROWS_AS(MlpSpec({{3}, Activation::kRelu}).validate(), ConfigError);
}

TEST_CASE("backward: linear loss gives an all-ones gradient") {
  Rng rng(5);
  Param w("w", random_matrix(3, 4, rng));
  Tape tape;
  Var loss = sum(tape.parameter(w));
  tape.backward(loss);
  CHECK(w.grad == Matrix::Ones(3, 4));
}

TEST_CASE("backward: least squares gradient is (Wx - y) x^T") {
  Rng rng(6);
  Param w("w", random_matrix(3, 4, rng));
  const Matrix x = random_matrix(4, 1, rng);
  const Matrix y = random_matrix(3, 1, rng);
  Tape tape;
  Var residual = sub(matmul(tape.parameter(w), tape.constant(x)), tape.constant(y));
  tape.backward(scale(sum_squares(residual), 0.5));
  const Matrix analytic = (w.value * x - y) * x.transpose();
  CHECK((w.grad - analytic).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward: before any forward pass is a state error") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(Var{}), StateError);
  Tape other;
  Var v = other.constant(Matrix::Ones(1, 1));
  tape.constant(Matrix::Ones(1, 1));
  CHECK_THROWS_AS(tape.backward(v), StateError);
}

TEST_CASE("backward: non-scalar loss rejected") {
  Tape tape;
  Param w("w", Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(tape.parameter(w)), DimensionError);
}

TEST_CASE("backward: frozen parameters receive no gradient") {
  Param w("w", Matrix::Ones(2, 2), /*trainable=*/false);
  Param v("v", Matrix::Ones(2, 2));
  Tape tape;
  tape.backward(sum(mul(tape.parameter(w), tape.parameter(v))));
  CHECK(w.grad == Matrix::Zero(2, 2));
  CHECK(v.grad == Matrix::Ones(2, 2));
}

TEST_CASE("backward: random MLPs pass central finite differences") {
  Rng rng(11);
  const std::vector<std::vector<Index>> shapes = {
      {19, 64, 64, 8}, {5, 7, 3}, {4, 6, 6, 2}};
  for (const auto& widths : shapes) {
    for (Activation act : {Activation::kTanh, Activation::kRelu}) {
      Mlp net = Mlp::create(MlpSpec{widths, act}, rng, "net");
      for (DenseLayer& l : net.layers()) {
        l.bias.value = random_matrix(1, l.out_width(), rng, 0.1);
      }
      const Matrix x = random_matrix(3, widths.front(), rng);
      const Matrix c = random_matrix(3, widths.back(), rng);
      auto loss_value = [&]() {
        const Matrix out = net.forward(x);
        return out.cwiseProduct(c).sum() + 0.5 * out.squaredNorm();
      };
      std::vector<Param*> params;
      net.append_parameters(params);
      for (Param* p : params) p->zero_grad();
      Tape tape;
      Var out = net.forward(tape, tape.constant(x));
      tape.backward(add(sum(mul(out, tape.constant(c))),
                        scale(sum_squares(out), 0.5)));
      CHECK(std::abs(tape.value(tape.size() - 1)(0, 0) - loss_value()) < 1e-9);
      CHECK(msvae::testing::max_gradient_error(params, loss_value) < 1e-4);
    }
  }
}

TEST_CASE("elementwise ops: gradients against finite differences") {
  Rng rng(12);
  Param a("a", random_matrix(3, 4, rng));
  Param s("s", random_matrix(1, 1, rng));
  Param b("b", random_matrix(1, 4, rng));
  auto loss_value = [&]() {
    Matrix h = (a.value.rowwise() + b.value.row(0)) * s.value(0, 0);
    Matrix t = h.array().tanh().matrix() + h.array().exp().matrix();
    Matrix c = t.leftCols(2).cwiseMax(-0.5).cwiseMin(1.5);
    return c.sum() + t.rightCols(2).squaredNorm();
  };
  Tape tape;
  Var h = mul(add_row(tape.parameter(a), tape.parameter(b)), tape.parameter(s));
  Var t = add(tanh(h), exp(h));
  Var loss = add(sum(clamp(slice_cols(t, 0, 2), -0.5, 1.5)),
                 sum_squares(slice_cols(t, 2, 2)));
  tape.backward(loss);
  CHECK(std::abs(loss.value()(0, 0) - loss_value()) < 1e-12);
  CHECK(msvae::testing::max_gradient_error({&a, &s, &b}, loss_value) < 1e-6);
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(13);
  Param p("p", random_matrix(3, 2, rng));
  const Matrix before = p.value;
  AdamState state;
  std::vector<Param*> params{&p};
  adam_step(state, params, 0.01);
  CHECK(state.step_count == 1);
  CHECK(bit_equal(p.value, before));
  adam_step(state, params, 0.01);
  CHECK(state.step_count == 2);
}

TEST_CASE("adam: first step moves by lr * g / (|g| + eps)") {
  for (double g : {0.3, -2.0, 1e-3}) {
    Param p("p", Matrix::Constant(1, 1, 1.5));
    p.grad(0, 0) = g;
    AdamState state;
    std::vector<Param*> params{&p};
    const double lr = 0.05;
    adam_step(state, params, lr);
    const double expected = 1.5 - lr * g / (std::abs(g) + 1e-8);
    CHECK(std::abs(p.value(0, 0) - expected) < 1e-15);
    CHECK(std::abs(std::abs(p.value(0, 0) - 1.5) - lr) < 1e-6);
  }
}

TEST_CASE("adam: frozen parameters untouched; lr must be positive") {
  Param frozen("f", Matrix::Ones(2, 2), false);
  frozen.grad.setConstant(3.0);
  Param live("l", Matrix::Ones(2, 2));
  live.grad.setConstant(3.0);
  AdamState state;
  std::vector<Param*> params{&frozen, &live};
  adam_step(state, params, 0.1);
  CHECK(frozen.value == Matrix::Ones(2, 2));
  CHECK(live.value(0, 0) < 1.0);
  CHECK_THROWS_AS(adam_step(state, params, 0.0), ConfigError);
  CHECK_THROWS_AS(adam_step(state, params, -1.0), ConfigError);
}

TEST_CASE("adam: quadratic (w-3)^2 follows the scalar oracle") {
  // Independent scalar Adam.
  std::vector<double> oracle;
  {
    double w = 0.0, m = 0.0, v = 0.0;
    for (int t = 1; t <= 100; ++t) {
      const double g = 2.0 * (w - 3.0);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      const double mh = m / (1.0 - std::pow(0.9, t));
      const double vh = v / (1.0 - std::pow(0.999, t));
      w -= 0.1 * mh / (std::sqrt(vh) + 1e-8);
      oracle.push_back(w);
    }
  }
  Param w("w", Matrix::Zero(1, 1));
  AdamState state;
  std::vector<Param*> params{&w};
  std::vector<double> errors;
  for (int t = 0; t < 100; ++t) {
    w.grad(0, 0) = 2.0 * (w.value(0, 0) - 3.0);
    adam_step(state, params, 0.1);
    CHECK(std::abs(w.value(0, 0) - oracle[static_cast<std::size_t>(t)]) < 1e-12);
    errors.push_back(std::abs(w.value(0, 0) - 3.0));
  }
  double lead = 0.0, trail = 0.0;
  for (int t = 0; t < 50; ++t) {
    lead += errors[static_cast<std::size_t>(t)];
    trail += errors[static_cast<std::size_t>(t + 50)];
  }
  CHECK(trail < lead);
  CHECK(errors.back() < 0.025);
}

TEST_CASE("determinism: same seed gives bit-identical draws and inits") {
  Rng a(99), b(99);
  CHECK(bit_equal(standard_normal(4, 5, a), standard_normal(4, 5, b)));
  Rng c(5), d(5);
  Mlp x = Mlp::create(MlpSpec{{3, 8, 2}}, c, "m");
  Mlp y = Mlp::create(MlpSpec{{3, 8, 2}}, d, "m");
  CHECK(bit_equal(x.layers()[0].weight.value, y.layers()[0].weight.value));
  CHECK(x.layers()[0].bias.value == Matrix::Zero(1, 8));
  const double limit = std::sqrt(6.0 / 11.0);
  CHECK(x.layers()[0].weight.value.cwiseAbs().maxCoeff() <= limit);
}
