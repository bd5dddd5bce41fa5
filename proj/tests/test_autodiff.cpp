#include "ghoi/autodiff.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace ghoi;
using ad::Matrix;
using ad::Tape;
using ad::Var;

namespace {

Matrix random_matrix(int r, int c, std::mt19937_64& rng, double s = 1.0) {
  std::normal_distribution<double> g(0.0, s);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = g(rng);
  return m;
}

// Builds f(inputs) on a fresh tape and returns sum(f .* w).
using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

double evaluate(const Builder& f, const std::vector<Matrix>& inputs, const Matrix& w) {
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.constant(m));
  return t.value(t.dot(f(t, vars), w))(0, 0);
}

void check_gradients(const Builder& f, std::vector<Matrix> inputs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.variable(m));
  const Var out = f(t, vars);
  const Matrix w = random_matrix(static_cast<int>(t.value(out).rows()), static_cast<int>(t.value(out).cols()), rng);
  t.backward(t.dot(out, w));
  const double h = 1e-6;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Matrix analytic = t.grad(vars[k]);
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      auto plus = inputs, minus = inputs;
      plus[k](i) += h;
      minus[k](i) -= h;
      const double fd = (evaluate(f, plus, w) - evaluate(f, minus, w)) / (2 * h);
      EXPECT_NEAR(analytic(i), fd, 1e-6 * std::max(1.0, std::abs(fd))) << "input " << k << " entry " << i;
    }
  }
}

}  // namespace

TEST(Tape, MatmulFamily) {
  std::mt19937_64 rng(1);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
                  {random_matrix(3, 4, rng), random_matrix(4, 2, rng)}, 2);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.matmul_nt(v[0], v[1]); },
                  {random_matrix(3, 4, rng), random_matrix(5, 4, rng)}, 3);
}

TEST(Tape, ElementwiseOps) {
  std::mt19937_64 rng(2);
  const Matrix a = random_matrix(3, 4, rng), b = random_matrix(3, 4, rng);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); }, {a, b}, 4);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); }, {a, b}, 5);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); }, {a, b}, 6);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.scale(v[0], -2.5); }, {a}, 7);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.gelu(v[0]); }, {a}, 8);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.add_row(v[0], v[1]); },
                  {a, random_matrix(1, 4, rng)}, 9);
}

TEST(Tape, SoftmaxAndLayerNorm) {
  std::mt19937_64 rng(3);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.softmax_rows(v[0]); },
                  {random_matrix(4, 5, rng, 2.0)}, 10);
  check_gradients([](Tape& t, const std::vector<Var>& v) { return t.layer_norm_rows(v[0], v[1], v[2]); },
                  {random_matrix(4, 6, rng), random_matrix(1, 6, rng), random_matrix(1, 6, rng)}, 11);
}

TEST(Tape, SlicesConcatAndReductions) {
  std::mt19937_64 rng(4);
  check_gradients(
      [](Tape& t, const std::vector<Var>& v) { return t.concat_cols({v[0], t.cols(v[1], 1, 2), v[0]}); },
      {random_matrix(3, 2, rng), random_matrix(3, 4, rng)}, 12);
  const Matrix target = random_matrix(3, 3, rng);
  check_gradients([target](Tape& t, const std::vector<Var>& v) { return t.mse(v[0], target); },
                  {random_matrix(3, 3, rng)}, 13);
}

TEST(Tape, SoftmaxRowsSumToOne) {
  std::mt19937_64 rng(5);
  Tape t;
  const Var s = t.softmax_rows(t.constant(random_matrix(6, 7, rng, 30.0)));
  for (Eigen::Index r = 0; r < 6; ++r) EXPECT_NEAR(t.value(s).row(r).sum(), 1.0, 1e-12);
}

TEST(Tape, ReusedVariableAccumulates) {
  Tape t;
  const Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  const Var y = t.mul(x, x);  // x^2
  t.backward(t.add(y, x));    // d/dx = 2x + 1
  EXPECT_DOUBLE_EQ(t.grad(x)(0, 0), 7.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(Matrix::Ones(2, 2));
  const Var x = t.variable(Matrix::Ones(2, 2));
  t.backward(t.dot(t.matmul(c, x), Matrix::Ones(2, 2)));
  EXPECT_EQ(t.grad(c).norm(), 0.0);
  EXPECT_TRUE(t.grad(x).isApprox(Matrix::Constant(2, 2, 2.0)));
  EXPECT_THROW(t.matmul(c, t.constant(Matrix::Ones(3, 3))), Error);
}
