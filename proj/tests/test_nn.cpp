#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "fox/nn.hpp"

using namespace fox;
using namespace fox::nn;

namespace {

template <typename M>
void fill(M& m, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  for (Index k = 0; k < m.size(); ++k) m(k) = g(rng);
}

}  // namespace

TEST(Layout, SlicesAreContiguousAndDisjoint) {
  Layout l;
  l.add("a", 3, 2);
  l.add("b", 4);
  l.add("c", 1, 5);
  Index expected = 0;
  for (const auto& s : l.slices()) {
    EXPECT_EQ(s.offset, expected);
    expected += s.size();
  }
  EXPECT_EQ(l.size(), expected);
  EXPECT_TRUE(l.find("b").has_value());
  EXPECT_FALSE(l.find("zzz").has_value());
}

TEST(Linear, IdentityWeightsPassThrough) {
  Layout layout;
  Linear<double> lin(layout, "l", 3, 3);
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  p.mutable_tensor(lin.weight_id()) = Mat<double>::Identity(3, 3);
  Mat<double> x(3, 2);
  x << 1, -2, 3, 4, -5, 6;
  EXPECT_EQ(lin.forward(p, x), x);
}

TEST(Network, ZeroParamsSigmoidGivesHalf) {
  Layout layout;
  Network<double> net(layout, "n", {4, {5, 3}, {Activation::relu, Activation::sigmoid}, false});
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  const auto r = net.forward(p, Mat<double>::Ones(4, 2));
  EXPECT_TRUE((r.output.array() == 0.5).all());
}

TEST(Network, ShapeMismatchThrows) {
  Layout layout;
  Network<double> net(layout, "n", {4, {5}, {Activation::relu}, false});
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  EXPECT_THROW(net.forward(p, Mat<double>::Ones(3, 1)), ConfigError);
}

TEST(GruCell, ZeroParametersHandEvaluated) {
  Layout layout;
  GruCell<double> gru(layout, "g", 2, 3);
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Mat<double> x(2, 1), h(3, 1);
  x << 0.3, -0.7;
  h << 0.5, -1.0, 2.0;
  // r = z = sigmoid(0) = 0.5, n = tanh(0) = 0, h' = 0.5 * 0 + 0.5 * h
  const Mat<double> out = gru.forward(p, x, h);
  EXPECT_TRUE(out.isApprox(0.5 * h, 0.0));
}

TEST(GruCell, RandomParametersHandEvaluated) {
  Layout layout;
  GruCell<double> gru(layout, "g", 2, 3);
  auto lp = std::make_shared<Layout>(layout);
  ParameterVector<double> p(lp);
  Rng rng(1);
  gru.init(p, rng);
  Mat<double> x(2, 1), h(3, 1);
  x << 0.3, -0.7;
  h << 0.5, -1.0, 0.2;
  const auto Wi = p.tensor(*lp->find("g.weight_ih"));
  const auto Wh = p.tensor(*lp->find("g.weight_hh"));
  const auto bi = p.tensor(*lp->find("g.bias_ih"));
  const auto bh = p.tensor(*lp->find("g.bias_hh"));
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Mat<double> expected(3, 1);
  for (int k = 0; k < 3; ++k) {
    double ir = bi(k), iz = bi(3 + k), in = bi(6 + k), hr = bh(k), hz = bh(3 + k), hn = bh(6 + k);
    for (int c = 0; c < 2; ++c) {
      ir += Wi(k, c) * x(c);
      iz += Wi(3 + k, c) * x(c);
      in += Wi(6 + k, c) * x(c);
    }
    for (int c = 0; c < 3; ++c) {
      hr += Wh(k, c) * h(c);
      hz += Wh(3 + k, c) * h(c);
      hn += Wh(6 + k, c) * h(c);
    }
    const double r = sig(ir + hr), z = sig(iz + hz), n = std::tanh(in + r * hn);
    expected(k) = (1 - z) * n + z * h(k);
  }
  EXPECT_TRUE(gru.forward(p, x, h).isApprox(expected, 1e-12));
}

TEST(Backward, ScalarLinear) {
  Layout layout;
  Linear<double> lin(layout, "l", 1, 1);
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  p.mutable_tensor(lin.weight_id())(0, 0) = 3.0;
  ParameterVector<double> g = p.zeros_like();
  lin.backward(p, Mat<double>::Constant(1, 1, 2.0), Mat<double>::Ones(1, 1), g);
  EXPECT_EQ(g.tensor(lin.weight_id())(0, 0), 2.0);
  EXPECT_EQ(g.tensor(lin.bias_id())(0, 0), 1.0);
}

TEST(Backward, MseAtPerfectPredictionIsZero) {
  Layout layout;
  Network<double> net(layout, "n", {3, {6, 2}, {Activation::tanh, Activation::identity}, false});
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Rng rng(2);
  net.init(p, rng);
  Mat<double> x(3, 4);
  fill(x, rng);
  const auto r = net.forward(p, x);
  const Mat<double> dout = 2.0 * (r.output - r.output) / static_cast<double>(r.output.size());
  EXPECT_EQ(net.backward(p, r.record, dout).values().cwiseAbs().maxCoeff(), 0.0);
}

TEST(Backward, StaleRecordIsContractError) {
  Layout layout;
  Network<double> net(layout, "n", {2, {3}, {Activation::relu}, false});
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Rng rng(3);
  net.init(p, rng);
  const auto r = net.forward(p, Mat<double>::Ones(2, 1));
  p.mutable_values()(0) += 1.0;
  EXPECT_THROW(net.backward(p, r.record, Mat<double>::Ones(3, 1)), ContractError);
}

namespace {

// Squared-error loss 0.5 * ||net(x) - y||^2 / N and its analytic gradient.
struct Regression {
  Network<double> net;
  Mat<double> x, y, h0;
  bool recurrent;

  double loss(const ParameterVector<double>& p) const {
    const auto r = net.forward(p, x, recurrent ? &h0 : nullptr);
    double l = 0.5 * (r.output - y).squaredNorm() / x.cols();
    if (recurrent) l += 0.5 * r.hidden.squaredNorm() / x.cols();
    return l;
  }
  ParameterVector<double> grad(const ParameterVector<double>& p) const {
    const auto r = net.forward(p, x, recurrent ? &h0 : nullptr);
    const Mat<double> dout = (r.output - y) / static_cast<double>(x.cols());
    const Mat<double> dh = r.hidden / static_cast<double>(x.cols());
    return net.backward(p, r.record, dout, recurrent ? &dh : nullptr);
  }
};

}  // namespace

TEST(GradientCheck, RandomTwoLayerNet) {
  for (auto act : {Activation::tanh, Activation::sigmoid, Activation::elu, Activation::relu}) {
    Layout layout;
    Regression reg{Network<double>(layout, "n", {4, {7, 3}, {act, Activation::identity}, false}), {}, {}, {}, false};
    ParameterVector<double> p(std::make_shared<Layout>(layout));
    Rng rng(5);
    reg.net.init(p, rng);
    reg.x.resize(4, 6);
    reg.y.resize(3, 6);
    fill(reg.x, rng);
    fill(reg.y, rng);
    const auto report = finite_difference_check([&](const auto& q) { return reg.loss(q); }, p, reg.grad(p));
    EXPECT_TRUE(report.pass) << to_string(act) << "\n" << report.summary();
  }
}

TEST(GradientCheck, RecurrentNetworkThroughHiddenState) {
  Layout layout;
  Regression reg{Network<double>(layout, "n", {3, {5, 2}, {Activation::relu, Activation::identity}, true}), {}, {}, {}, true};
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Rng rng(6);
  reg.net.init(p, rng);
  reg.x.resize(3, 4);
  reg.y.resize(2, 4);
  reg.h0.resize(5, 4);
  fill(reg.x, rng);
  fill(reg.y, rng);
  fill(reg.h0, rng);
  const auto report = finite_difference_check([&](const auto& q) { return reg.loss(q); }, p, reg.grad(p));
  EXPECT_TRUE(report.pass) << report.summary();
}

TEST(GradientCheck, LinearRegressionTightTolerance) {
  Layout layout;
  Regression reg{Network<double>(layout, "n", {3, {2}, {Activation::identity}, false}), {}, {}, {}, false};
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Rng rng(7);
  reg.net.init(p, rng);
  reg.x.resize(3, 5);
  reg.y.resize(2, 5);
  fill(reg.x, rng);
  fill(reg.y, rng);
  const auto report = finite_difference_check([&](const auto& q) { return reg.loss(q); }, p, reg.grad(p), 1e-5, 1e-6);
  EXPECT_TRUE(report.pass) << report.summary();
}

TEST(GradientCheck, CorruptedGradientFails) {
  Layout layout;
  Regression reg{Network<double>(layout, "n", {3, {4, 2}, {Activation::tanh, Activation::identity}, false}), {}, {}, {}, false};
  ParameterVector<double> p(std::make_shared<Layout>(layout));
  Rng rng(8);
  reg.net.init(p, rng);
  reg.x.resize(3, 5);
  reg.y.resize(2, 5);
  fill(reg.x, rng);
  fill(reg.y, rng);
  auto g = reg.grad(p);
  g.mutable_values()(3) += 0.1;
  const auto report = finite_difference_check([&](const auto& q) { return reg.loss(q); }, p, g);
  EXPECT_FALSE(report.pass);
  int failed = 0;
  for (const auto& t : report.tensors) failed += t.pass ? 0 : 1;
  EXPECT_EQ(failed, 1);
}

TEST(Network, BitIdenticalAcrossRuns) {
  auto run = [] {
    Layout layout;
    Network<float> net(layout, "n", {4, {8, 3}, {Activation::relu, Activation::identity}, true});
    ParameterVector<float> p(std::make_shared<Layout>(layout));
    Rng rng(9);
    net.init(p, rng);
    return net.forward(p, Mat<float>::Constant(4, 3, 0.25f)).output;
  };
  const Mat<float> a = run(), b = run();
  EXPECT_EQ(std::memcmp(a.data(), b.data(), sizeof(float) * a.size()), 0);
}

TEST(Optimizer, SgdStep) {
  auto layout = std::make_shared<Layout>();
  layout->add("w", 2);
  ParameterVector<double> p(layout), g(layout);
  p.mutable_values() << 1.0, -1.0;
  g.mutable_values() << 0.5, 2.0;
  Optimizer<double> opt({OptimizerKind::sgd, 0.1}, 2);
  opt.step(p, g);
  EXPECT_DOUBLE_EQ(p.values()(0), 0.95);
  EXPECT_DOUBLE_EQ(p.values()(1), -1.2);
}

TEST(Optimizer, RmspropAndAdamFirstSteps) {
  auto layout = std::make_shared<Layout>();
  layout->add("w", 1);
  ParameterVector<double> g(layout);
  g.mutable_values() << 0.5;

  ParameterVector<double> p(layout);
  Optimizer<double>::Options rms;
  rms.kind = OptimizerKind::rmsprop;
  rms.lr = 0.01;
  Optimizer<double> o1(rms, 1);
  o1.step(p, g);
  const double v = 0.01 * 0.25;
  EXPECT_NEAR(p.values()(0), -0.01 * 0.5 / (std::sqrt(v) + 1e-5), 1e-15);

  ParameterVector<double> q(layout);
  Optimizer<double>::Options adam;
  adam.kind = OptimizerKind::adam;
  adam.lr = 0.001;
  Optimizer<double> o2(adam, 1);
  o2.step(q, g);
  // bias-corrected first step is lr * g / (|g| + eps)
  EXPECT_NEAR(q.values()(0), -0.001 * 0.5 / (0.5 + 1e-8), 1e-15);
}

TEST(Optimizer, AdamDescendsQuadratic) {
  auto layout = std::make_shared<Layout>();
  layout->add("w", 3);
  ParameterVector<double> p(layout);
  p.mutable_values() << 1.0, -2.0, 0.5;
  Optimizer<double>::Options o;
  o.kind = OptimizerKind::adam;
  o.lr = 1e-3;
  Optimizer<double> opt(o, 3);
  const double before = p.values().squaredNorm();
  ParameterVector<double> g(layout);
  g.mutable_values() = 2.0 * p.values();
  opt.step(p, g);
  EXPECT_LT(p.values().squaredNorm(), before);
}

TEST(ClipGradNorm, RescalesOnlyAboveThreshold) {
  auto layout = std::make_shared<Layout>();
  layout->add("w", 2);
  ParameterVector<double> g(layout);
  g.mutable_values() << 3.0, 4.0;
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.values()(0), 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.values().norm(), 1.0, 1e-15);
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Layout layout;
  Network<float> net(layout, "n", {4, {8, 3}, {Activation::relu, Activation::identity}, true});
  ParameterVector<float> p(std::make_shared<Layout>(layout));
  Rng rng(10);
  net.init(p, rng);
  p.mutable_values()(0) = -0.0f;
  p.mutable_values()(1) = 1e-40f;  // subnormal
  std::stringstream ss;
  write_checkpoint(ss, p);
  const auto q = read_checkpoint<float>(ss);
  EXPECT_TRUE(q.layout() == p.layout());
  ASSERT_EQ(q.size(), p.size());
  EXPECT_EQ(std::memcmp(q.values().data(), p.values().data(), sizeof(float) * p.size()), 0);
}

TEST(Checkpoint, TruncatedInputIsRuntimeError) {
  std::stringstream ss("fox-params 1\ntensors 1\nw 0 2 1\nvalues 2\n0x1p+0\n");
  EXPECT_THROW(read_checkpoint<double>(ss), RuntimeError);
}

TEST(ParameterVector, CopyGetsNewStamp) {
  auto layout = std::make_shared<Layout>();
  layout->add("w", 2);
  ParameterVector<double> a(layout);
  ParameterVector<double> b = a;
  EXPECT_NE(a.stamp(), b.stamp());
  EXPECT_TRUE(a.all_finite());
  b.mutable_values()(0) = std::nan("");
  EXPECT_FALSE(b.all_finite());
}
