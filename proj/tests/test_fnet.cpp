#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fox/fnet.hpp"

using namespace fox;
using nn::Mat;
using nn::Vec;

namespace {

FNetConfig small_config(int slots = 1) {
  FNetConfig c;
  c.summary_dim = 4;
  c.latent_dim = 2;
  c.hidden = 6;
  c.n_agents = 2;
  c.slots = slots;
  c.hash_bits = 9;
  return c;
}

template <typename M>
void fill(M& m, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index k = 0; k < m.size(); ++k) m(k) = g(rng);
}

// Loop-based evaluation of an Mlp from its parameter tensors.
Eigen::VectorXd eval_mlp(const nn::Mlp<double>& mlp, const nn::ParameterVector<double>& p, Eigen::VectorXd x) {
  for (std::size_t k = 0; k < mlp.layers().size(); ++k) {
    const auto W = p.tensor(mlp.layers()[k].weight_id());
    const auto b = p.tensor(mlp.layers()[k].bias_id());
    Eigen::VectorXd y(W.rows());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      double s = b(r, 0);
      for (Eigen::Index c = 0; c < W.cols(); ++c) s += W(r, c) * x(c);
      if (mlp.activations()[k] == nn::Activation::relu) s = std::max(s, 0.0);
      y(r) = s;
    }
    x = y;
  }
  return x;
}

std::vector<FormationSample<double>> two_agent_batch(const FNetConfig& c, int samples, Rng& rng) {
  std::vector<FormationSample<double>> batch;
  for (int s = 0; s < samples; ++s) {
    FormationSample<double> fs;
    fs.summaries.resize(c.summary_dim, 2);
    fill(fs.summaries, rng);
    fs.members = {{1}, {0}};
    fs.targets.resize(2 * c.slots, 2);
    fill(fs.targets, rng, 0.5);
    batch.push_back(fs);
  }
  return batch;
}

}  // namespace

TEST(FormationTargets, DistanceAndScaledCode) {
  Formation f;
  f.per_agent = {{{0.5, 256}}, {{1.5, 0}, {2.0, 511}}};
  const Mat<double> t = formation_targets<double>(f, 2, 9);
  ASSERT_EQ(t.rows(), 4);
  ASSERT_EQ(t.cols(), 2);
  EXPECT_EQ(t(0, 0), 0.5);
  EXPECT_EQ(t(1, 0), 0.5);
  EXPECT_EQ(t(2, 0), 0.0);  // padding
  EXPECT_EQ(t(3, 1), 511.0 / 512.0);
  EXPECT_THROW(formation_targets<double>(f, 1, 9), ConfigError);
}

TEST(GaussianKl, Examples) {
  EXPECT_EQ(gaussian_kl(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(3)), 0.0);
  EXPECT_DOUBLE_EQ(gaussian_kl(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1)), 0.5);
}

TEST(GaussianKl, MatchesMonteCarlo) {
  Eigen::Vector2d mu(0.7, -0.3), ls(-0.4, 0.25);
  const double closed = gaussian_kl(mu, ls);
  Rng rng(1);
  std::normal_distribution<double> g;
  const int N = 100000;
  double sum = 0, sq = 0;
  for (int k = 0; k < N; ++k) {
    double logratio = 0;
    for (int d = 0; d < 2; ++d) {
      const double eps = g(rng), s = std::exp(ls(d)), z = mu(d) + s * eps;
      logratio += (-0.5 * eps * eps - ls(d)) - (-0.5 * z * z);
    }
    sum += logratio;
    sq += logratio * logratio;
  }
  const double mean = sum / N, se = std::sqrt((sq / N - mean * mean) / N);
  EXPECT_LT(std::abs(mean - closed), 3 * se);
}

TEST(FormationNet, ZeroNoiseGivesMean) {
  FormationNet<double> net(small_config());
  Rng rng(2);
  net.init(rng);
  Vec<double> h(4);
  fill(h, rng);
  const auto z = net.encode_and_sample(h, Vec<double>::Zero(2));
  EXPECT_EQ(z.value, z.mean);
  EXPECT_THROW(net.encode_and_sample(Vec<double>::Zero(3), Vec<double>::Zero(2)), ConfigError);
}

TEST(FormationNet, LogStdIsClamped) {
  FormationNet<double> net(small_config());
  Rng rng(3);
  net.init(rng);
  const auto& last = net.encoder().layers().back();
  auto b = net.mutable_params().mutable_tensor(last.bias_id());
  b(2, 0) = -1e4;
  b(3, 0) = 1e4;
  const auto z = net.encode_and_sample(Vec<double>::Zero(4), Vec<double>::Ones(2));
  EXPECT_EQ(z.log_std(0), -10.0);
  EXPECT_EQ(z.log_std(1), 2.0);
  EXPECT_NEAR(z.value(0), z.mean(0), 1e-4);
}

TEST(FormationNet, PredictionShapeAndZeroDecoder) {
  FormationNet<double> net(small_config(2));
  const std::vector<Vec<double>> two = {Vec<double>::Ones(2), Vec<double>::Ones(2)};
  const std::vector<Vec<double>> three = {Vec<double>::Ones(2), Vec<double>::Ones(2), Vec<double>::Ones(2)};
  EXPECT_EQ(net.predict_next_formation(two).size(), 2);
  EXPECT_EQ(net.predict_next_formation(three).size(), 4);
  EXPECT_EQ(net.predict_next_formation(three).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_THROW(net.predict_next_formation({Vec<double>::Ones(2)}), ConfigError);
}

TEST(FormationNet, PredictionMatchesHandForwardPass) {
  FormationNet<double> net(small_config(2));
  Rng rng(4);
  net.init(rng);
  Vec<double> a(2), b(2);
  fill(a, rng);
  fill(b, rng);
  Eigen::VectorXd in = Eigen::VectorXd::Zero(6);
  in << a, b, 0, 0;
  const Eigen::VectorXd expected = eval_mlp(net.formation_decoder(), net.params(), in).head(2);
  EXPECT_TRUE(net.predict_next_formation({a, b}).isApprox(expected, 1e-12));
}

TEST(FormationNet, PerfectPredictionHasZeroFormationLoss) {
  FormationNet<double> net(small_config());
  Rng rng(5);
  auto batch = two_agent_batch(small_config(), 3, rng);
  for (auto& s : batch) s.targets.setZero();
  const Mat<double> noise = Mat<double>::Zero(2, 6);
  EXPECT_EQ(net.compute_losses(batch, noise).formation, 0.0);
}

TEST(FormationNet, GradientFlipIsLinearCombination) {
  FormationNet<double> net(small_config());
  Rng rng(6);
  net.init(rng);
  const auto batch = two_agent_batch(small_config(), 4, rng);
  Mat<double> noise(2, 8);
  fill(noise, rng);
  const auto fk = net.loss_gradient(batch, noise, {1.0, 1.0, 0.0, 0.0}).grad;
  const auto g = net.loss_gradient(batch, noise, {0.0, 0.0, 1.0, 1.0}).grad;
  const auto flipped = net.loss_gradient(batch, noise, {1.0, 1.0, 1.0, -0.1}).grad;
  const auto& layout = net.params().layout();
  for (std::size_t id = 0; id < layout.slices().size(); ++id) {
    const std::string& name = layout.slices()[id].name;
    Eigen::VectorXd expected;
    if (name.rfind("encoder", 0) == 0) {
      expected = fk.segment(id) - 0.1 * g.segment(id);
    } else {
      expected = fk.segment(id) + g.segment(id);
    }
    EXPECT_TRUE(flipped.segment(id).isApprox(expected, 1e-12) || expected.norm() < 1e-15) << name;
  }
}

TEST(FormationNet, ZeroLambdaEncoderMatchesPlainDescent) {
  FormationNet<double> net(small_config());
  Rng rng(7);
  net.init(rng);
  const auto batch = two_agent_batch(small_config(), 4, rng);
  Mat<double> noise(2, 8);
  fill(noise, rng);
  const auto plain = net.loss_gradient(batch, noise, {1.0, 1.0, 0.0, 0.0}).grad;
  const auto flip0 = net.loss_gradient(batch, noise, {1.0, 1.0, 1.0, 0.0}).grad;
  const auto& layout = net.params().layout();
  for (std::size_t id : layout.with_prefix("encoder")) EXPECT_EQ(plain.segment(id), flip0.segment(id));
}

TEST(FormationNet, FlippedEncoderStepIncreasesTrajectoryLoss) {
  FormationNet<double> net(small_config());
  Rng rng(8);
  net.init(rng);
  const auto batch = two_agent_batch(small_config(), 4, rng);
  Mat<double> noise(2, 8);
  fill(noise, rng);
  // only the flipped L_g term reaches the encoder
  const auto g = net.loss_gradient(batch, noise, {0.0, 0.0, 0.0, -0.1}).grad;
  const double before = net.compute_losses(batch, noise).trajectory;
  auto p = net.params();
  p.mutable_values() -= 1e-3 * g.values();
  const double after = net.compute_losses(p, batch, noise).trajectory;
  EXPECT_GT(after, before);
}

TEST(FormationNet, UpdateDescendsWithoutFlip) {
  FormationNet<double> net(small_config());
  Rng rng(9);
  net.init(rng);
  const auto batch = two_agent_batch(small_config(), 4, rng);
  Mat<double> noise(2, 8);
  fill(noise, rng);
  auto total = [&] {
    const auto l = net.compute_losses(batch, noise);
    return l.formation + l.kl + l.trajectory;
  };
  const double before = total();
  ASSERT_TRUE(net.update_with_noise(batch, noise, 0.0));
  EXPECT_LT(total(), before);
}

TEST(FormationNet, NonFiniteGradientSkipsStep) {
  FormationNet<double> net(small_config());
  Rng rng(10);
  net.init(rng);
  auto batch = two_agent_batch(small_config(), 2, rng);
  batch[0].summaries(0, 0) = std::nan("");
  const auto before = net.params().values();
  EXPECT_FALSE(net.update(batch, rng, 0.1));
  EXPECT_EQ(net.params().values(), before);
}

TEST(AwareReward, ZeroWhenBothPredictionsPerfect) {
  FormationNet<double> net(small_config());
  Rng rng(11);
  auto batch = two_agent_batch(small_config(), 3, rng);
  for (auto& s : batch) s.targets.setZero();
  for (double r : net.aware_reward(batch, rng)) EXPECT_EQ(r, 0.0);
}

TEST(AwareReward, MatchesDirectEvaluation) {
  const FNetConfig cfg = small_config();
  FormationNet<double> net(cfg);
  Rng rng(12);
  net.init(rng);
  const auto batch = two_agent_batch(cfg, 1, rng);
  Mat<double> noise(2, 2);
  fill(noise, rng);
  std::vector<Mat<double>> priors(2, Mat<double>(2, 2));
  for (auto& m : priors) fill(m, rng);
  const double got = net.aware_reward_with(batch, noise, priors, 1)[0];

  Eigen::VectorXd z[2];
  for (int i = 0; i < 2; ++i) {
    const Eigen::VectorXd out = eval_mlp(net.encoder(), net.params(), batch[0].summaries.col(i));
    z[i] = out.head(2) + (out.tail(2).array().max(-10.0).min(2.0).exp() * noise.col(i).array()).matrix();
  }
  auto mse = [&](int i, const Eigen::VectorXd& own, const Eigen::VectorXd& other) {
    Eigen::VectorXd in(4);
    in << own, other;
    const Eigen::VectorXd pred = eval_mlp(net.formation_decoder(), net.params(), in);
    return (pred - batch[0].targets.col(i)).squaredNorm() / 2.0;
  };
  double expected = 0.0;
  for (int i = 0; i < 2; ++i) {
    const int j = 1 - i;
    const double full = mse(i, z[i], z[j]);
    const double own_replaced = mse(i, priors[0].col(i), z[j]);
    const double member_replaced = mse(i, z[i], priors[1].col(i));
    expected += (-full + 0.5 * (own_replaced + member_replaced)) / 2.0;
  }
  EXPECT_NEAR(got, expected, 1e-12);
}

TEST(AwareReward, PositiveWhenReplacementHurts) {
  const FNetConfig cfg = small_config();
  FormationNet<double> net(cfg);
  Rng rng(13);
  net.init(rng);
  auto batch = two_agent_batch(cfg, 1, rng);
  const Mat<double> noise = Mat<double>::Zero(2, 2);
  // targets equal to the full-latent prediction
  auto [mean, ls] = net.encode(batch[0].summaries);
  for (int i = 0; i < 2; ++i) batch[0].targets.col(i) = net.predict_next_formation({mean.col(i), mean.col(1 - i)});
  std::vector<Mat<double>> priors(2, Mat<double>(2, 2));
  for (auto& m : priors) fill(m, rng, 3.0);
  EXPECT_GT(net.aware_reward_with(batch, noise, priors, 1)[0], 0.0);
}

TEST(ElboOracle, TrueWhenPosteriorExact) {
  Eigen::MatrixXd joint(2, 2);
  joint << 0.4, 0.1, 0.1, 0.4;
  Eigen::MatrixXd post = joint;
  for (int z = 0; z < 2; ++z) post.col(z) /= joint.col(z).sum();
  const auto r = elbo_bound_oracle(joint, post);
  EXPECT_NEAR(r.exact_mi, r.elbo, 1e-15);
  EXPECT_GT(r.exact_mi, 0.0);
}

TEST(ElboOracle, IndependentModel) {
  Eigen::Vector3d pf(0.2, 0.3, 0.5);
  Eigen::RowVector2d pz(0.6, 0.4);
  const Eigen::MatrixXd joint = pf * pz;
  Eigen::MatrixXd q(3, 2);
  q << 0.5, 0.1, 0.25, 0.1, 0.25, 0.8;
  const auto r = elbo_bound_oracle(joint, q);
  EXPECT_NEAR(r.exact_mi, 0.0, 1e-15);
  EXPECT_LE(r.elbo, 0.0);
}

TEST(ElboOracle, RejectsUnnormalizedInput) {
  Eigen::MatrixXd joint = Eigen::MatrixXd::Constant(2, 2, 0.3);
  Eigen::MatrixXd q = Eigen::MatrixXd::Constant(2, 2, 0.5);
  EXPECT_THROW(elbo_bound_oracle(joint, q), ConfigError);
  joint.setConstant(0.25);
  q(0, 0) = 0.9;
  EXPECT_THROW(elbo_bound_oracle(joint, q), ConfigError);
}
