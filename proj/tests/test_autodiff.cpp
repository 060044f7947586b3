#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tcode/adam.hpp"
#include "tcode/autodiff.hpp"
#include "tcode/gradcheck.hpp"
#include "tcode/mlp.hpp"
#include "tcode/objectives.hpp"

using namespace tcode;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(Shape{r, c});
  for (double& v : t.data()) v = g(rng);
  return t;
}

}  // namespace

TEST(Tensor, RejectsMismatchedData) {
  EXPECT_THROW(Tensor(Shape{2, 3}, std::vector<double>(5)), DimensionError);
  EXPECT_EQ(Tensor(Shape{2, 3}).size(), 6u);
  EXPECT_THROW(Tensor(Shape{2, 3}).reshaped(Shape{4, 2}), DimensionError);
}

TEST(Forward, ZeroWeightsGiveZeroEmbeddings) {
  EncoderModel model({5, 7, 3}, {Activation::relu});
  Tape tape;
  Var z = model.forward(tape.constant(random_matrix(4, 5, 1)));
  for (double v : tape.value(z).data()) EXPECT_EQ(v, 0.0);
}

TEST(Forward, IdentityLinearLayerIsIdentity) {
  EncoderModel model({3, 3}, {});
  for (std::size_t i = 0; i < 3; ++i) model.weight(0)(i, i) = 1.0;
  const Tensor x = random_matrix(2, 3, 2);
  Tape tape;
  EXPECT_EQ(tape.value(model.forward(tape.constant(x))), x);
  EXPECT_EQ(model.embed(x), x);
}

TEST(Forward, TwoLayerReluMatchesHandRolledOracle) {
  const auto model = EncoderModel::initialized({6, 9, 4}, {Activation::relu}, 11);
  Tensor x = random_matrix(5, 6, 3);
  // Straight-line reimplementation.
  std::vector<double> expected;
  for (std::size_t r = 0; r < 5; ++r) {
    std::vector<double> h(9);
    for (std::size_t j = 0; j < 9; ++j) {
      double s = model.bias(0)[j];
      for (std::size_t i = 0; i < 6; ++i) s += x(r, i) * model.weight(0)(i, j);
      h[j] = s > 0 ? s : 0;
    }
    for (std::size_t j = 0; j < 4; ++j) {
      double s = model.bias(1)[j];
      for (std::size_t i = 0; i < 9; ++i) s += h[i] * model.weight(1)(i, j);
      expected.push_back(s);
    }
  }
  EncoderModel copy = model;
  Tape tape;
  const Tensor& z = tape.value(copy.forward(tape.constant(x)));
  ASSERT_EQ(z.shape(), (Shape{5, 4}));
  for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_NEAR(z[i], expected[i], 1e-12);
}

TEST(Forward, ShapeMismatchIsDimensionError) {
  auto model = EncoderModel::initialized({4, 3}, {}, 0);
  Tape tape;
  EXPECT_THROW(model.forward(tape.constant(Tensor(Shape{2, 5}))), DimensionError);
  EXPECT_THROW(model.embed(Tensor(Shape{2, 5})), DimensionError);
}

TEST(Activations, MatchClosedForms) {
  Tape tape;
  Tensor x(Shape{1, 5}, {-2.0, -0.5, 0.0, 0.5, 3.0});
  const Tensor& r = tape.value(relu(tape.constant(x)));
  const Tensor& e = tape.value(elu(tape.constant(x)));
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(r[i], std::max(x[i], 0.0));
    EXPECT_DOUBLE_EQ(e[i], x[i] > 0 ? x[i] : std::exp(x[i]) - 1.0);
  }
}

TEST(Backward, SumOfParametersGivesUnitGradients) {
  auto model = EncoderModel::initialized({3, 4, 2}, {Activation::elu}, 5);
  Tape tape;
  Var total;
  for (Tensor* p : model.parameters()) {
    Var s = sum(tape.parameter(*p));
    total = total.valid() ? add(total, s) : s;
  }
  tape.backward(total);
  for (Tensor* p : model.parameters()) {
    for (double g : std::as_const(*p).grad()) EXPECT_EQ(g, 1.0);
  }
}

TEST(Backward, HalfSquaredNormOfLinearMap) {
  // 0.5 ||x W||^2 for a row vector x: dW = x^T (x W).
  Tensor w = random_matrix(3, 2, 7);
  const Tensor x = random_matrix(1, 3, 8);
  Tape tape;
  Var y = matmul(tape.constant(x), tape.parameter(w));
  tape.backward(scale(squared_norm(y), 0.5));
  const Tensor& yv = tape.value(y);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(std::as_const(w).grad()[i * 2 + j], x[i] * yv[j], 1e-14);
  }
}

TEST(Backward, NonScalarLossIsContractViolation) {
  Tape tape;
  Var v = tape.variable(Tensor(Shape{2}));
  EXPECT_THROW(tape.backward(v), ContractViolation);
}

TEST(Backward, EncoderThroughEuclideanMatchesFiniteDifferences) {
  const auto base = EncoderModel::initialized({4, 6, 3}, {Activation::elu}, 21);
  const Tensor x = random_matrix(3 * 3, 4, 22);
  std::vector<Tensor> params;
  for (const Tensor* p : base.parameters()) params.push_back(*p);
  auto loss = [&](Tape& tape, std::span<const Var> in) {
    Var h = elu(linear(tape.constant(x), in[0], in[1]));
    Var z = linear(h, in[2], in[3]);
    return euclidean_loss(reshape(z, Shape{3, 3, 3}));
  };
  EXPECT_LT(relative_gradient_error(loss, params), 1e-4);
}

TEST(Backward, DeterministicAcrossRuns) {
  auto run = [] {
    auto model = EncoderModel::initialized({5, 8, 3}, {Activation::relu}, 3);
    Tape tape;
    Var z = model.forward(tape.constant(random_matrix(8, 5, 4)));
    Var loss = euclidean_loss(reshape(z, Shape{2, 4, 3}));
    tape.backward(loss);
    std::vector<double> out{tape.value(loss)[0]};
    for (const Tensor* p : std::as_const(model).parameters()) out.insert(out.end(), p->grad().begin(), p->grad().end());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor p = random_matrix(2, 2, 1);
  const Tensor before = p;
  p.grad();
  AdamState state;
  Tensor* params[] = {&p};
  adam_step(state, params);
  EXPECT_EQ(p, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Tensor p(Shape{3}, {1.0, -2.0, 0.5});
  auto g = p.grad();
  g[0] = 0.3;
  g[1] = -7.0;
  g[2] = 1e-3;
  AdamState state;
  state.config.learning_rate = 0.01;
  Tensor* params[] = {&p};
  adam_step(state, params);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-8);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-8);
  EXPECT_NEAR(p[2], 0.5 - 0.01, 1e-6);
}

TEST(Adam, QuadraticConvergesAndMatchesReferenceRecurrence) {
  Tensor w(Shape{1}, {0.0});
  AdamState state;
  state.config.learning_rate = 0.1;
  Tensor* params[] = {&w};
  // Reference recurrence written out independently.
  double ref = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    w.zero_grad();
    w.grad()[0] = w[0] - 3.0;
    adam_step(state, params);
    const double g = ref - 3.0;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    ref -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_LT(std::abs(w[0] - 3.0), 0.5);
  EXPECT_NEAR(w[0], ref, 1e-12);
}

TEST(Adam, DecoupledWeightDecayShrinksWithoutGradient) {
  Tensor p(Shape{1}, {2.0});
  p.grad();
  AdamState state;
  state.config.learning_rate = 0.1;
  state.config.weight_decay = 0.5;
  Tensor* params[] = {&p};
  adam_step(state, params);
  EXPECT_DOUBLE_EQ(p[0], 2.0 - 0.1 * 0.5 * 2.0);
}

TEST(Adam, NonFiniteGradientAborts) {
  Tensor p(Shape{2});
  p.grad()[1] = std::nan("");
  AdamState state;
  Tensor* params[] = {&p};
  EXPECT_THROW(adam_step(state, params), NumericalError);
}
