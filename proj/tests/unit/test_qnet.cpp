#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lpca/qlearning.hpp"
#include "lpca/qnet.hpp"

using namespace lpca;

namespace {

QNetwork random_net(std::uint64_t seed, Activation act, int width = 8, int layers = 2, int states = 3) {
  QNetworkConfig c;
  c.state_count = states;
  c.a_max = 2.0;
  c.lambda_max = 5.0;
  c.hidden_width = width;
  c.hidden_layers = layers;
  c.output_scale = 3.0;
  c.activation = act;
  c.zero_output_layer = false;
  c.seed = seed;
  QNetwork net(c);
  // Nonzero biases so every parameter is exercised.
  Rng rng(seed ^ 0xb1a5);
  for (std::size_t l = 0; l < net.layer_count(); ++l) {
    for (double& b : net.biases(l)) b = uniform(rng, -0.5, 0.5);
  }
  return net;
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(QNetwork, ZeroOutputLayerGivesZero) {
  QNetworkConfig c;
  c.seed = 5;
  const QNetwork net(c);
  for (int s = 0; s < 2; ++s) {
    for (double a : {0.0, 0.7, 2.0}) {
      EXPECT_EQ(net.forward(s, a, 1.3), 0.0);
      EXPECT_EQ(net.grad_action(s, a, -2.0), 0.0);
    }
  }
}

TEST(QNetwork, ForwardIsDeterministic) {
  const QNetwork net = random_net(3, Activation::Softsign);
  const double y = net.forward(1, 0.3, -0.4);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(net.forward(1, 0.3, -0.4), y);
  const QNetwork copy = net;
  EXPECT_EQ(copy.forward(1, 0.3, -0.4), y);
}

TEST(QNetwork, RejectsInputsOutsideDomain) {
  const QNetwork net = random_net(3, Activation::Softsign);
  EXPECT_THROW(net.forward(3, 0.5, 0.0), DomainError);
  EXPECT_THROW(net.forward(0, 2.5, 0.0), DomainError);
  EXPECT_THROW(net.forward(0, 0.5, 5.5), DomainError);
}

TEST(QNetwork, OutputFiniteOnHypercubeCorners) {
  const QNetwork net = random_net(9, Activation::Silu, 16, 3);
  for (int s = 0; s < 3; ++s) {
    for (double a : {0.0, 2.0}) {
      for (double l : {-5.0, 5.0}) EXPECT_TRUE(std::isfinite(net.forward(s, a, l)));
    }
  }
}

// Parameter gradients against central differences, every activation and
// several depths/widths, 100 random draws in total.
TEST(QNetworkGradient, ParametersMatchCentralDifferences) {
  const Activation acts[] = {Activation::Softsign, Activation::Tanh, Activation::Silu};
  int draws = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; draws < 100; ++seed) {
    const Activation act = acts[seed % 3];
    const int width = seed % 2 ? 8 : 16;  // 16 exercises the fixed-width kernels
    QNetwork net = random_net(seed, act, width, 1 + static_cast<int>(seed % 3));
    Rng rng(seed);
    const QInput in{static_cast<int>(uniform_index(rng, 3)), uniform(rng, 0.1, 1.9), uniform(rng, -4.5, 4.5)};
    const double target = uniform(rng, -2.0, 2.0);
    std::vector<double> grad(net.parameters().size(), 0.0);
    net.accumulate_squared_error_gradient(in, target, 1.0, grad);
    auto loss = [&] {
      const double e = net.forward(in.s, in.a, in.lambda) - target;
      return e * e;
    };
    for (int probe = 0; probe < 10; ++probe) {
      const std::size_t p = uniform_index(rng, grad.size());
      const double h = 1e-5;
      double& w = net.parameters()[p];
      const double saved = w;
      w = saved + h;
      const double up = loss();
      w = saved - h;
      const double down = loss();
      w = saved;
      const double fd = (up - down) / (2.0 * h);
      if (std::abs(fd) < 1e-7 && std::abs(grad[p]) < 1e-7) continue;
      worst = std::max(worst, rel_err(grad[p], fd));
      EXPECT_LT(rel_err(grad[p], fd), 1e-4) << "seed " << seed << " param " << p;
    }
    ++draws;
  }
  RecordProperty("worst_relative_error", std::to_string(worst));
}

TEST(QNetworkGradient, BatchGradientEqualsSumOfSingles) {
  const QNetwork net = random_net(77, Activation::Softsign, 64, 2, 2);
  Rng rng(1);
  std::vector<QInput> inputs;
  std::vector<double> targets;
  for (int i = 0; i < 70; ++i) {
    inputs.push_back({static_cast<int>(uniform_index(rng, 2)), uniform(rng, 0.0, 2.0), uniform(rng, -5.0, 5.0)});
    targets.push_back(uniform(rng, -1.0, 1.0));
  }
  std::vector<double> batch(net.parameters().size(), 0.0), single(net.parameters().size(), 0.0);
  const double sse_batch = net.accumulate_batch_squared_error_gradient(inputs, targets, 0.5, batch);
  double sse_single = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    sse_single += net.accumulate_squared_error_gradient(inputs[i], targets[i], 0.5, single);
  }
  EXPECT_NEAR(sse_batch, sse_single, 1e-10);
  for (std::size_t p = 0; p < batch.size(); ++p) EXPECT_NEAR(batch[p], single[p], 1e-10 * (1.0 + std::abs(single[p])));
}

TEST(QNetworkGradient, ActionGradientMatchesCentralDifferences) {
  const Activation acts[] = {Activation::Softsign, Activation::Tanh, Activation::Silu};
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const QNetwork net = random_net(seed, acts[seed % 3], 16, 2);
    Rng rng(seed * 31);
    const int s = static_cast<int>(uniform_index(rng, 3));
    const double a = uniform(rng, 0.05, 1.95);
    const double l = uniform(rng, -5.0, 5.0);
    // h = 1e-4 in normalized action units
    const double h = 1e-4 * net.a_max();
    const double fd = (net.forward(s, a + h, l) - net.forward(s, a - h, l)) / (2.0 * h);
    const double g = net.grad_action(s, a, l);
    if (std::abs(fd) < 1e-7 && std::abs(g) < 1e-7) continue;
    EXPECT_LT(rel_err(g, fd), 1e-4) << "seed " << seed;
  }
}

TEST(Adam, FirstStepMovesEveryParameterByLearningRate) {
  // With bias correction the first step is lr * g / (|g| + eps) ~ lr * sign(g).
  AdamOptimizer opt(3, {0.01});
  std::vector<double> p{1.0, -2.0, 0.5};
  const std::vector<double> g{3.0, -0.2, 0.0};
  opt.step(p, g);
  EXPECT_NEAR(p[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(p[1], -2.0 + 0.01, 1e-9);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(opt.steps(), 1u);
  EXPECT_THROW(opt.step(p, std::vector<double>(2)), ContractViolation);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const QNetwork net = random_net(11, Activation::Tanh, 16, 3);
  const LambdaGrid grid(5.0, 1000);
  std::stringstream buf;
  EXPECT_THROW(write_checkpoint(buf, net, LambdaGrid(7.5)), ContractViolation);
  write_checkpoint(buf, net, grid);
  const Checkpoint ck = read_checkpoint(buf);
  EXPECT_EQ(ck.net.parameters(), net.parameters());
  EXPECT_EQ(ck.grid.values(), grid.values());
  EXPECT_EQ(ck.net.activation(), Activation::Tanh);
  for (int s = 0; s < 3; ++s) {
    for (double a : {0.0, 0.123456789, 2.0}) {
      EXPECT_EQ(ck.net.forward(s, a, -1.1), net.forward(s, a, -1.1));
      EXPECT_EQ(ck.net.grad_action(s, a, 3.3), net.grad_action(s, a, 3.3));
    }
  }
}

TEST(Checkpoint, RejectsCorruptInput) {
  std::stringstream bad("lpca-qnet 2\n");
  EXPECT_THROW(read_checkpoint(bad), ConfigError);
  const QNetwork net = random_net(1, Activation::Softsign);
  std::stringstream buf;
  write_checkpoint(buf, net, LambdaGrid(5.0));
  std::string text = buf.str();
  text.resize(text.size() / 2);
  std::stringstream truncated(text);
  EXPECT_THROW(read_checkpoint(truncated), ConfigError);
}

TEST(LambdaGrid, ThousandSymmetricAscendingPoints) {
  const LambdaGrid g(5.0);
  ASSERT_EQ(g.size(), 1000u);
  EXPECT_EQ(g[0], -5.0);
  EXPECT_EQ(g[999], 5.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    EXPECT_EQ(g[i], -g[g.size() - 1 - i]);
    if (i) {
      EXPECT_GT(g[i], g[i - 1]);
    }
  }
  EXPECT_NEAR(g.step(), 10.0 / 999.0, 1e-15);
  EXPECT_THROW(LambdaGrid(0.0), DomainError);
}
