#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "popsynth/neural.hpp"

using namespace popsynth;

namespace {

Mlp random_net(std::vector<std::size_t> widths, std::vector<OutputHead> heads, std::uint64_t seed) {
  Rng rng(seed);
  Mlp m = make_mlp(widths, std::move(heads), rng);
  for (auto& l : m.layers)
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) l.biases(i) = 0.3 * standard_normal(rng);
  return m;
}

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = standard_normal(rng);
  return m;
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(Forward, ZeroWeightsGiveZeroHidden) {
  Rng rng(1);
  std::vector<std::size_t> w{3, 4, 2};
  Mlp m = make_mlp(w, {}, rng);
  for (auto& l : m.layers) {
    l.weights.setZero();
    l.biases.setZero();
  }
  Eigen::VectorXd x(3);
  x << 1, -2, 3;
  const auto cache = forward(m, Eigen::MatrixXd(x));
  EXPECT_TRUE(cache.activations[1].isZero(0.0));
}

TEST(Forward, UniformSoftmax) {
  Rng rng(1);
  std::vector<std::size_t> w{2, 3};
  Mlp m = make_mlp(w, {{HeadKind::softmax, 0, 3}}, rng);
  m.layers[0].weights.setZero();
  const Eigen::VectorXd y = forward(m, Eigen::VectorXd(Eigen::VectorXd::Ones(2)));
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(y(i), 1.0 / 3.0, 1e-15);
}

TEST(Forward, MatchesStraightLineOracle) {
  Mlp m = random_net({4, 5, 3}, {}, 17);
  Rng rng(2);
  const Eigen::MatrixXd x = random_matrix(4, 6, rng);
  const Eigen::MatrixXd y = forward(m, x).output;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    std::vector<double> h(5);
    for (int i = 0; i < 5; ++i) {
      double s = m.layers[0].biases(i);
      for (int j = 0; j < 4; ++j) s += m.layers[0].weights(i, j) * x(j, c);
      h[static_cast<std::size_t>(i)] = std::tanh(s);
    }
    for (int o = 0; o < 3; ++o) {
      double s = m.layers[1].biases(o);
      for (int i = 0; i < 5; ++i) s += m.layers[1].weights(o, i) * h[static_cast<std::size_t>(i)];
      EXPECT_NEAR(y(o, c), s, 1e-12);
    }
  }
}

TEST(Forward, SoftmaxBlocksArePositiveAndNormalized) {
  Mlp m = random_net({3, 6, 7}, {{HeadKind::softmax, 0, 3}, {HeadKind::linear, 3, 1}, {HeadKind::softmax, 4, 3}}, 4);
  Rng rng(5);
  const Eigen::MatrixXd y = forward(m, Eigen::MatrixXd(20.0 * random_matrix(3, 50, rng))).output;
  for (Eigen::Index c = 0; c < y.cols(); ++c) {
    EXPECT_NEAR(y.col(c).segment(0, 3).sum(), 1.0, 1e-9);
    EXPECT_NEAR(y.col(c).segment(4, 3).sum(), 1.0, 1e-9);
    EXPECT_GT(y.col(c).segment(0, 3).minCoeff(), 0.0);
    EXPECT_GT(y.col(c).segment(4, 3).minCoeff(), 0.0);
  }
}

TEST(Forward, Errors) {
  Mlp m = random_net({3, 2}, {}, 1);
  EXPECT_THROW(forward(m, Eigen::MatrixXd(Eigen::MatrixXd::Zero(4, 1))), SchemaMismatchError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(3, 1);
  bad(1, 0) = std::nan("");
  EXPECT_THROW(forward(m, bad), NumericInputError);
}

TEST(Mlp, HeadsMustTileOutput) {
  Rng rng(1);
  std::vector<std::size_t> w{2, 4};
  EXPECT_THROW(make_mlp(w, {{HeadKind::softmax, 0, 3}}, rng), ConfigError);
  EXPECT_THROW(make_mlp(w, {{HeadKind::softmax, 0, 2}, {HeadKind::linear, 3, 1}}, rng), ConfigError);
}

TEST(Mlp, GlorotInitRange) {
  Rng rng(3);
  std::vector<std::size_t> w{10, 30, 5};
  const Mlp m = make_mlp(w, {}, rng);
  EXPECT_LE(m.layers[0].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 40.0));
  EXPECT_LE(m.layers[1].weights.cwiseAbs().maxCoeff(), std::sqrt(6.0 / 35.0));
  EXPECT_TRUE(m.layers[0].biases.isZero(0.0));
  EXPECT_EQ(m.layers[0].activation, Activation::tanh);
  EXPECT_EQ(m.layers[1].activation, Activation::linear);
}

TEST(Backward, ZeroOutputGradient) {
  Mlp m = random_net({3, 4, 2}, {}, 8);
  Rng rng(1);
  const auto cache = forward(m, Eigen::MatrixXd(random_matrix(3, 5, rng)));
  const auto g = backward(m, cache, Eigen::MatrixXd::Zero(2, 5));
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_TRUE(g.weights[l].isZero(0.0));
    EXPECT_TRUE(g.biases[l].isZero(0.0));
  }
}

TEST(Backward, SingleLinearNeuron) {
  Mlp m;
  m.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 0.7), Eigen::VectorXd::Constant(1, -0.2), Activation::linear});
  m.heads = {{HeadKind::linear, 0, 1}};
  const auto cache = forward(m, Eigen::MatrixXd(Eigen::MatrixXd::Constant(1, 1, 2.5)));
  const auto g = backward(m, cache, Eigen::MatrixXd::Ones(1, 1));
  EXPECT_DOUBLE_EQ(g.weights[0](0, 0), 2.5);
  EXPECT_DOUBLE_EQ(g.biases[0](0), 1.0);
  EXPECT_DOUBLE_EQ(g.input(0, 0), 0.7);
}

TEST(Backward, StaleCache) {
  Mlp a = random_net({3, 4, 2}, {}, 1), b = random_net({3, 5, 2}, {}, 1);
  const auto cache = forward(a, Eigen::MatrixXd(Eigen::MatrixXd::Zero(3, 1)));
  EXPECT_THROW(backward(b, cache, Eigen::MatrixXd::Zero(2, 1)), StaleCacheError);
  EXPECT_THROW(backward(a, cache, Eigen::MatrixXd::Zero(2, 2)), StaleCacheError);
}

TEST(Backward, FiniteDifferenceCheck) {
  const double h = 1e-5;
  for (std::uint64_t trial = 0; trial < 12; ++trial) {
    Rng rng(100 + trial);
    const bool soft = trial % 2 == 0;
    std::vector<std::size_t> widths = trial % 3 == 0 ? std::vector<std::size_t>{3, 4, 5}
                                                      : std::vector<std::size_t>{2, 3, 3, 5};
    std::vector<OutputHead> heads;
    if (soft) heads = {{HeadKind::softmax, 0, 3}, {HeadKind::linear, 3, 2}};
    Mlp m = random_net(widths, heads, 200 + trial);
    ASSERT_LE(m.parameter_count(), 50u);
    const Eigen::MatrixXd x = random_matrix(static_cast<Eigen::Index>(widths[0]), 3, rng);
    const Eigen::MatrixXd c = random_matrix(5, 3, rng);
    auto loss = [&](const Mlp& net) { return (forward(net, x).output.array() * c.array()).sum(); };
    const auto g = backward(m, forward(m, x), c);
    double worst = 0.0;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
      for (Eigen::Index i = 0; i < m.layers[l].weights.size(); ++i) {
        Mlp p = m, q = m;
        p.layers[l].weights.data()[i] += h;
        q.layers[l].weights.data()[i] -= h;
        worst = std::max(worst, rel_error(g.weights[l].data()[i], (loss(p) - loss(q)) / (2 * h)));
      }
      for (Eigen::Index i = 0; i < m.layers[l].biases.size(); ++i) {
        Mlp p = m, q = m;
        p.layers[l].biases(i) += h;
        q.layers[l].biases(i) -= h;
        worst = std::max(worst, rel_error(g.biases[l](i), (loss(p) - loss(q)) / (2 * h)));
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      Eigen::MatrixXd xp = x, xq = x;
      xp.data()[i] += h;
      xq.data()[i] -= h;
      const double fd = ((forward(m, xp).output.array() * c.array()).sum() -
                         (forward(m, xq).output.array() * c.array()).sum()) /
                        (2 * h);
      worst = std::max(worst, rel_error(g.input.data()[i], fd));
    }
    EXPECT_LT(worst, 1e-4) << "trial " << trial;
  }
}

TEST(Rmsprop, ZeroGradientLeavesParameters) {
  Mlp m = random_net({3, 2}, {}, 1);
  const Mlp before = m;
  auto state = make_rmsprop(m);
  rmsprop_step(m, MlpGradients::zeros_like(m), state);
  EXPECT_EQ(m.layers[0].weights, before.layers[0].weights);
  EXPECT_EQ(m.layers[0].biases, before.layers[0].biases);
}

TEST(Rmsprop, FirstStepHandValue) {
  Mlp m;
  m.layers.push_back({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1), Activation::linear});
  m.heads = {{HeadKind::linear, 0, 1}};
  auto state = make_rmsprop(m, 0.001, 0.9, 1e-8);
  auto g = MlpGradients::zeros_like(m);
  g.weights[0](0, 0) = 1.0;
  rmsprop_step(m, g, state);
  EXPECT_NEAR(state.weight_acc[0](0, 0), 0.1, 1e-15);
  EXPECT_NEAR(m.layers[0].weights(0, 0), -0.001 / std::sqrt(0.1 + 1e-8), 1e-15);
  EXPECT_NEAR(m.layers[0].weights(0, 0), -0.0031623, 1e-7);
  EXPECT_EQ(m.layers[0].biases(0), 0.0);
}

TEST(Rmsprop, DecreasesConvexQuadratic) {
  Mlp m;
  m.layers.push_back({Eigen::MatrixXd::Constant(1, 1, 3.0), Eigen::VectorXd::Zero(1), Activation::linear});
  m.heads = {{HeadKind::linear, 0, 1}};
  auto state = make_rmsprop(m, 0.01);
  auto f = [](double w) { return 0.5 * (w - 1.0) * (w - 1.0); };
  double prev = f(m.layers[0].weights(0, 0));
  for (int k = 0; k < 2; ++k) {
    auto g = MlpGradients::zeros_like(m);
    g.weights[0](0, 0) = m.layers[0].weights(0, 0) - 1.0;
    rmsprop_step(m, g, state);
    const double now = f(m.layers[0].weights(0, 0));
    EXPECT_LT(now, prev);
    prev = now;
  }
}

TEST(Rmsprop, DivergenceNamesBlock) {
  Mlp m = random_net({2, 3, 2}, {}, 1);
  auto state = make_rmsprop(m);
  auto g = MlpGradients::zeros_like(m);
  g.biases[1](0) = std::numeric_limits<double>::infinity();
  try {
    rmsprop_step(m, g, state, "decoder");
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("decoder layer 1 biases"), std::string::npos) << e.what();
  }
}

TEST(Rmsprop, AccumulatorsNonNegative) {
  Mlp m = random_net({3, 4, 2}, {}, 2);
  auto state = make_rmsprop(m);
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    auto g = MlpGradients::zeros_like(m);
    for (auto& w : g.weights) w = random_matrix(w.rows(), w.cols(), rng);
    rmsprop_step(m, g, state);
  }
  for (const auto& a : state.weight_acc) EXPECT_GE(a.minCoeff(), 0.0);
}

TEST(Checkpoint, JsonRoundTripIsExact) {
  Mlp m = random_net({3, 4, 5}, {{HeadKind::softmax, 0, 2}, {HeadKind::linear, 2, 3}}, 9);
  const Mlp back = mlp_from_json(json::parse(mlp_to_json(m).dump()));
  ASSERT_EQ(back.layers.size(), m.layers.size());
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ(back.layers[l].weights, m.layers[l].weights);
    EXPECT_EQ(back.layers[l].biases, m.layers[l].biases);
    EXPECT_EQ(back.layers[l].activation, m.layers[l].activation);
  }
  EXPECT_EQ(back.heads.size(), 2u);
  EXPECT_EQ(back.heads[0].kind, HeadKind::softmax);
}
