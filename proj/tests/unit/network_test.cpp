#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "splab/adam.hpp"
#include "splab/errors.hpp"
#include "splab/network.hpp"

using namespace splab;

namespace {

Layer dense_layer(Matrix w, Vector b, Activation act = Activation::identity) {
  Layer l;
  l.weight = std::move(w);
  l.bias = std::move(b);
  l.activation = act;
  return l;
}

Matrix random_matrix(Rng& rng, int rows, int cols) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-1.0, 1.0);
  return m;
}

}  // namespace

TEST(ParamCount, ReferenceArchitectures) {
  EXPECT_EQ(param_count(std::vector<int>{4, 64, 160, 2}), 11042u);
  EXPECT_EQ(param_count(std::vector<int>{6, 64, 160, 3}), 11331u);
  EXPECT_EQ(param_count(std::vector<int>{8, 64, 160, 4}), 11620u);
  EXPECT_EQ(param_count(std::vector<int>{1, 1}), 2u);
}

TEST(ParamCount, HiddenWidthsFitAllThreeRows) {
  // Counts grow by 2*h1 + h2 + 1 per extra input and output unit pair:
  // 11331 - 11042 = 289 with h1 = 64, h2 = 160.
  EXPECT_EQ(param_count(std::vector<int>{6, 64, 160, 3}) - param_count(std::vector<int>{4, 64, 160, 2}), 289u);
  EXPECT_EQ(param_count(std::vector<int>{8, 64, 160, 4}) - param_count(std::vector<int>{6, 64, 160, 3}), 289u);
}

TEST(MlpNew, DeterministicForSeed) {
  const Network a = mlp_new(std::vector<int>{2, 2}, Activation::relu, 7);
  const Network b = mlp_new(std::vector<int>{2, 2}, Activation::relu, 7);
  const Network c = mlp_new(std::vector<int>{2, 2}, Activation::relu, 8);
  EXPECT_TRUE(a.identical_to(b));
  EXPECT_FALSE(a.identical_to(c));
}

TEST(MlpNew, InitRangeAndZeroBias) {
  const Network net = mlp_new(std::vector<int>{4, 64, 160, 2}, Activation::relu, 1);
  for (const auto& l : net.layers()) {
    const double bound = std::sqrt(6.0 / l.in_dim());
    EXPECT_LE(l.weight.cwiseAbs().maxCoeff(), bound);
    EXPECT_EQ(l.bias.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_EQ(net.layers().back().activation, Activation::identity);
}

TEST(MlpNew, RejectsBadArchitectures) {
  EXPECT_THROW(mlp_new(std::vector<int>{}, Activation::relu, 0), InvalidArchitecture);
  EXPECT_THROW(mlp_new(std::vector<int>{4}, Activation::relu, 0), InvalidArchitecture);
  EXPECT_THROW(mlp_new(std::vector<int>{4, 0, 2}, Activation::relu, 0), InvalidArchitecture);
}

TEST(Forward, IdentityLayerPassesInputThrough) {
  const Network net({dense_layer(Matrix::Identity(3, 3), Vector::Zero(3))});
  Matrix x(2, 3);
  x << 1, -2, 3, 0.5, 0, -7;
  EXPECT_EQ(predict(net, x), x);
}

TEST(Forward, ReluZeroesNegativePreactivations) {
  Network net({dense_layer(-Matrix::Ones(4, 3), Vector::Constant(4, -1.0), Activation::relu),
               dense_layer(Matrix::Identity(4, 4), Vector::Zero(4))});
  const ForwardCache c = forward(net, Matrix::Ones(5, 3));
  EXPECT_EQ(c.layers[0].output.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(c.output().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Forward, MatchesLoopOracle) {
  Rng rng(3);
  const Network net = [&] {
    Network n = mlp_new(std::vector<int>{5, 7, 6, 3}, Activation::tanh, 11);
    n.mutable_layers()[0].activation = Activation::relu;
    for (auto& l : n.mutable_layers())
      for (Eigen::Index j = 0; j < l.bias.size(); ++j) l.bias(j) = rng.uniform(-0.3, 0.3);
    return n;
  }();
  const Matrix x = random_matrix(rng, 4, 5);
  const Matrix got = predict(net, x);

  for (int row = 0; row < x.rows(); ++row) {
    std::vector<double> a(x.row(row).data(), x.row(row).data() + x.cols());
    for (const auto& l : net.layers()) {
      std::vector<double> next(l.out_dim());
      for (int o = 0; o < l.out_dim(); ++o) {
        double s = l.bias(o);
        for (int i = 0; i < l.in_dim(); ++i) s += l.weight(o, i) * a[i];
        switch (l.activation) {
          case Activation::relu: s = s > 0.0 ? s : 0.0; break;
          case Activation::tanh: s = std::tanh(s); break;
          case Activation::identity: break;
        }
        next[o] = s;
      }
      a = next;
    }
    for (int o = 0; o < got.cols(); ++o) EXPECT_NEAR(got(row, o), a[o], 1e-12);
  }
}

TEST(Forward, ShapeMismatchThrows) {
  const Network net = mlp_new(std::vector<int>{3, 4, 2}, Activation::relu, 0);
  EXPECT_THROW(predict(net, Matrix::Zero(1, 4)), ShapeError);
}

TEST(Forward, GatedSampledNeedsRng) {
  Network net = mlp_new(std::vector<int>{3, 4, 2}, Activation::relu, 0);
  net.enable_gates(2.4);
  EXPECT_ANY_THROW(predict(net, Matrix::Zero(1, 3), GateMode::sampled, nullptr));
}

TEST(Backward, ZeroLossGradientGivesZeroGradients) {
  Network net = mlp_new(std::vector<int>{3, 5, 2}, Activation::tanh, 2);
  net.enable_gates(0.3);
  const Matrix x = Matrix::Random(4, 3);
  const ForwardCache c = forward(net, x);
  const Gradients g = backward(net, c, Matrix::Zero(4, 2));
  for (const auto& v : g.views())
    for (double d : v) EXPECT_EQ(d, 0.0);
}

TEST(Backward, LinearScalarGradientIsInput) {
  Matrix w(1, 3);
  w << 0.2, -0.7, 1.5;
  const Network net({dense_layer(w, Vector::Zero(1))});
  Matrix x(1, 3);
  x << 4.0, -1.0, 0.25;
  const Gradients g = backward(net, forward(net, x), Matrix::Ones(1, 1));
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.layers[0].weight(0, i), x(0, i));
  EXPECT_DOUBLE_EQ(g.layers[0].bias(0), 1.0);
  for (int i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.input(0, i), w(0, i));
}

TEST(Backward, StaleCacheRejected) {
  Network net = mlp_new(std::vector<int>{3, 4, 2}, Activation::relu, 0);
  const ForwardCache c = forward(net, Matrix::Ones(1, 3));
  net.mutable_layers()[0].bias(0) = 1.0;
  EXPECT_THROW(backward(net, c, Matrix::Ones(1, 2)), ConsistencyError);

  const Network other = mlp_new(std::vector<int>{3, 4, 2}, Activation::relu, 0);
  const ForwardCache c2 = forward(other, Matrix::Ones(1, 3));
  EXPECT_THROW(backward(net, c2, Matrix::Ones(1, 2)), ConsistencyError);
}

TEST(Backward, OutputGradShapeChecked) {
  const Network net = mlp_new(std::vector<int>{3, 4, 2}, Activation::relu, 0);
  const ForwardCache c = forward(net, Matrix::Ones(2, 3));
  EXPECT_THROW(backward(net, c, Matrix::Ones(2, 3)), ShapeError);
}

TEST(ForwardBackward, LeaveParametersUntouchedAndDeterministic) {
  Network net = mlp_new(std::vector<int>{4, 8, 3}, Activation::relu, 5);
  net.enable_gates(1.0);
  const Network before = net;
  const Matrix x = Matrix::Random(6, 4);
  Rng r1(9), r2(9);
  const ForwardCache c1 = forward(net, x, GateMode::sampled, &r1);
  const ForwardCache c2 = forward(net, x, GateMode::sampled, &r2);
  EXPECT_EQ(c1.output(), c2.output());
  const Gradients g1 = backward(net, c1, Matrix::Ones(6, 3));
  const Gradients g2 = backward(net, c2, Matrix::Ones(6, 3));
  const auto v1 = g1.views();
  const auto v2 = g2.views();
  for (std::size_t i = 0; i < v1.size(); ++i)
    for (std::size_t j = 0; j < v1[i].size(); ++j) EXPECT_EQ(v1[i][j], v2[i][j]);
  EXPECT_TRUE(net.identical_to(before));
}

TEST(Adam, ZeroGradientsKeepParamsAndDecayMoments) {
  std::vector<double> p{1.0, -2.0};
  std::vector<double> g{0.5, 0.5};
  std::vector<double> zero{0.0, 0.0};
  std::vector<std::span<double>> params{p};
  AdamState st;
  std::vector<std::span<const double>> grads{g};
  adam_step(st, params, grads);
  const double m = st.first_moment[0](0);
  const double v = st.second_moment[0](0);
  const std::vector<double> after_first = p;
  std::vector<std::span<const double>> zeros{zero};
  adam_step(st, params, zeros);
  EXPECT_DOUBLE_EQ(st.first_moment[0](0), 0.9 * m);
  EXPECT_DOUBLE_EQ(st.second_moment[0](0), 0.999 * v);
  EXPECT_EQ(st.step, 2u);

  // Fresh state: zero gradient leaves params exactly in place.
  AdamState fresh;
  std::vector<double> q{3.0};
  std::vector<std::span<double>> qp{q};
  std::vector<double> qz{0.0};
  std::vector<std::span<const double>> qg{qz};
  adam_step(fresh, qp, qg);
  EXPECT_EQ(q[0], 3.0);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g0 : {1e-3, 0.5, -40.0}) {
    std::vector<double> p{0.0};
    std::vector<double> g{g0};
    std::vector<std::span<double>> params{p};
    std::vector<std::span<const double>> grads{g};
    AdamState st(AdamConfig{.learning_rate = 0.01});
    adam_step(st, params, grads);
    EXPECT_NEAR(std::abs(p[0]), 0.01, 1e-6);
    EXPECT_LT(p[0] * g0, 0.0);
  }
}

TEST(Adam, QuadraticConverges) {
  // Oracle: the same recurrence written out by hand.
  double x = 0.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * (x - 3.0);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1.0 - std::pow(0.9, t))) / (std::sqrt(v / (1.0 - std::pow(0.999, t))) + 1e-8);
  }
  std::vector<double> p{0.0};
  std::vector<std::span<double>> params{p};
  AdamState st(AdamConfig{.learning_rate = 0.1});
  for (int t = 0; t < 100; ++t) {
    std::vector<double> g{2.0 * (p[0] - 3.0)};
    std::vector<std::span<const double>> grads{g};
    adam_step(st, params, grads);
  }
  EXPECT_NEAR(p[0], x, 1e-12);
  EXPECT_NEAR(p[0], 3.0, 0.1);
}

TEST(Adam, RejectsNonFiniteGradients) {
  std::vector<double> p{1.0, 2.0};
  std::vector<std::span<double>> params{p};
  std::vector<double> g{0.1, std::numeric_limits<double>::quiet_NaN()};
  std::vector<std::span<const double>> grads{g};
  AdamState st;
  EXPECT_THROW(adam_step(st, params, grads), NumericalError);
  EXPECT_EQ(p[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(Adam, GateTensorsUseTheirOwnRate) {
  Network net = mlp_new(std::vector<int>{2, 2}, Activation::identity, 0);
  net.enable_gates(1.0);
  Gradients g = Gradients::zeros_like(net);
  g.layers[0].weight.setConstant(1.0);
  g.layers[0].log_alpha.setConstant(1.0);
  const Matrix w0 = net.layer(0).weight;
  AdamState st(AdamConfig{.learning_rate = 1e-3, .gate_learning_rate = 1e-2});
  adam_step(st, net, g);
  EXPECT_NEAR((w0 - net.layer(0).weight).maxCoeff(), 1e-3, 1e-9);
  EXPECT_NEAR(1.0 - net.layer(0).log_alpha->maxCoeff(), 1e-2, 1e-9);
}
