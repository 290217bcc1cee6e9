#pragma once

// Self-check suites run by `fox verify` and by the acceptance tests:
// formation equivalence laws, the ELBO bound on enumerable models, finite
// difference gradient checks of every trainable network, monotonic mixing
// with individual-global-max, and bit-exact discretization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fox/common.hpp"
#include "fox/fnet.hpp"
#include "fox/formation.hpp"
#include "fox/nn.hpp"
#include "fox/qlearn.hpp"

namespace fox::verify {

struct SuiteResult {
  std::string name;
  long long checks = 0;
  long long failures = 0;
  double worst = 0.0;  // suite-specific worst statistic (error, violation)
  std::string detail;

  bool pass() const { return failures == 0 && checks > 0; }
};

// ---------------------------------------------------------------------------
// Equivalence laws

/// Random joint observation with entries on a 1/8 grid so translations are exact.
inline Eigen::MatrixXd random_grid_state(int d, int n, Rng& rng) {
  std::uniform_int_distribution<int> k(-8, 8);
  Eigen::MatrixXd s(d, n);
  for (Eigen::Index c = 0; c < s.size(); ++c) s(c) = k(rng) / 8.0;
  return s;
}

/// Either a common translation of s (same formation) or a fresh random state.
inline Eigen::MatrixXd related_state(const Eigen::MatrixXd& s, Rng& rng) {
  std::bernoulli_distribution translate(0.5);
  if (!translate(rng)) return random_grid_state(static_cast<int>(s.rows()), static_cast<int>(s.cols()), rng);
  std::uniform_int_distribution<int> k(-4, 4);
  Eigen::VectorXd shift(s.rows());
  for (Eigen::Index r = 0; r < shift.size(); ++r) shift(r) = k(rng) / 8.0;
  return s.colwise() + shift;
}

/// Reflexivity, symmetry and transitivity of formation equality (and of key
/// equality at l decimal places) over random triples.
inline SuiteResult equivalence_laws(IndexStrategy strategy, int triples = 1000, std::uint64_t seed = 1, int l = 1) {
  SuiteResult res;
  res.name = "equivalence laws (" + std::string(to_string(strategy)) + ")";
  Rng rng(seed);
  std::uniform_int_distribution<int> agents(2, 5), dims(2, 6);
  for (int k = 0; k < triples; ++k) {
    const int n = agents(rng), d = dims(rng);
    const SimHashProjector proj(9, d, seed * 7919 + static_cast<std::uint64_t>(k));
    const ExplorationState s1(random_grid_state(d, n, rng));
    const ExplorationState s2(related_state(s1.observations, rng));
    const ExplorationState s3(related_state(s2.observations, rng));
    const Formation f1 = arrange_formation(s1, strategy, proj), f2 = arrange_formation(s2, strategy, proj),
                    f3 = arrange_formation(s3, strategy, proj);
    const std::string k1 = formation_key(f1, l), k2 = formation_key(f2, l), k3 = formation_key(f3, l);
    auto expect = [&](bool ok) {
      ++res.checks;
      if (!ok) ++res.failures;
    };
    expect(formations_equivalent(s1, s1, strategy, proj));
    expect(formations_equivalent(s1, s2, strategy, proj) == formations_equivalent(s2, s1, strategy, proj));
    expect(!(f1 == f2 && f2 == f3) || f1 == f3);
    expect(k1 == formation_key(arrange_formation(s1, strategy, proj), l));
    expect(!(k1 == k2 && k2 == k3) || k1 == k3);
  }
  return res;
}

// ---------------------------------------------------------------------------
// ELBO bound

inline SuiteResult elbo_bound(int models = 50, std::uint64_t seed = 2, double tol = 1e-9) {
  SuiteResult res;
  res.name = "ELBO bound";
  Rng rng(seed);
  std::uniform_int_distribution<int> size(2, 12);
  std::gamma_distribution<double> dirichlet(0.5, 1.0);
  for (int k = 0; k < models; ++k) {
    const int nf = size(rng), nz = size(rng);
    Eigen::MatrixXd joint(nf, nz), q(nf, nz);
    for (Eigen::Index c = 0; c < joint.size(); ++c) joint(c) = dirichlet(rng) + 1e-12;
    joint /= joint.sum();
    for (Eigen::Index c = 0; c < q.size(); ++c) q(c) = dirichlet(rng) + 1e-12;
    for (int z = 0; z < nz; ++z) q.col(z) /= q.col(z).sum();
    const ElboResult random_q = elbo_bound_oracle(joint, q);
    Eigen::MatrixXd posterior = joint;
    for (int z = 0; z < nz; ++z) posterior.col(z) /= joint.col(z).sum();
    const ElboResult true_q = elbo_bound_oracle(joint, posterior);
    const double gap_violation = std::max(0.0, random_q.elbo - random_q.exact_mi);
    const double equality_error = std::abs(true_q.exact_mi - true_q.elbo);
    res.worst = std::max({res.worst, gap_violation, equality_error});
    res.checks += 2;
    if (gap_violation > tol) ++res.failures;
    if (equality_error > tol) ++res.failures;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Gradient checks

/// Small value-decomposition learner in double precision.
inline LearnerConfig small_learner_config() {
  LearnerConfig c;
  c.agent.input_dim = 5;
  c.agent.hidden = 6;
  c.agent.n_actions = 4;
  c.agent.n_agents = 3;
  c.agent.latent_dim = 3;
  c.agent.formation_head = true;
  c.mixer.n_agents = 3;
  c.mixer.state_dim = 4;
  c.mixer.embed = 5;
  c.mixer.hyper_hidden = 6;
  c.lambda_reg = 0.1;
  return c;
}

template <typename M>
void fill_normal(M& m, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  for (Eigen::Index c = 0; c < m.size(); ++c) m(c) = g(rng);
}

/// Random padded batch: B episodes of up to T steps, the last one shorter.
inline TdBatch<double> random_td_batch(const LearnerConfig& c, int B, int T, Rng& rng) {
  TdBatch<double> b;
  b.batch = B;
  b.steps = T;
  const int n = c.agent.n_agents;
  for (int t = 0; t <= T; ++t) {
    nn::Mat<double> x(c.agent.input_dim, n * B), s(c.mixer.state_dim, B);
    fill_normal(x, rng);
    fill_normal(s, rng);
    b.inputs.push_back(x);
    b.states.push_back(s);
  }
  std::uniform_int_distribution<int> act(0, c.agent.n_actions - 1);
  for (int t = 0; t < T; ++t) {
    std::vector<int> a(static_cast<std::size_t>(n) * B);
    for (int& v : a) v = act(rng);
    b.actions.push_back(a);
  }
  b.rewards.resize(T, B);
  fill_normal(b.rewards, rng);
  b.mask = nn::Mat<double>::Ones(T, B);
  b.terminal = nn::Mat<double>::Zero(T, B);
  if (B > 1 && T > 1) {
    b.mask(T - 1, B - 1) = 0.0;
    b.terminal(T - 2, B - 1) = 1.0;
  }
  return b;
}

/// TD loss gradient of the agent network (trunk, shared, local and formation
/// heads), the mixer and its hypernetworks at `points` random parameter draws.
inline SuiteResult gradient_q(int points = 5, std::uint64_t seed = 3, double tol = 1e-4) {
  SuiteResult res;
  res.name = "gradients: agent network + mixer";
  const LearnerConfig cfg = small_learner_config();
  for (int k = 0; k < points; ++k) {
    Rng rng(seed * 1000 + static_cast<std::uint64_t>(k));
    QLearner<double> learner(cfg);
    learner.init(rng);
    // distinct target parameters so the bootstrap term is non-trivial
    fill_normal(learner.mutable_target_params().mutable_values(), rng, 0.3);
    const TdBatch<double> batch = random_td_batch(cfg, 2, 3, rng);
    std::vector<nn::Mat<double>> z_on, z_tg;
    for (int t = 0; t < batch.steps; ++t) {
      nn::Mat<double> a(cfg.agent.latent_dim, cfg.agent.n_agents * batch.batch), b = a;
      fill_normal(a, rng);
      fill_normal(b, rng);
      z_on.push_back(a);
      z_tg.push_back(b);
    }
    const auto& theta_minus = learner.target_params();
    const auto target = learner.unroll(theta_minus, batch.inputs, batch.steps + 1, false);
    auto loss_at = [&](const nn::ParameterVector<double>& p) {
      const auto online = learner.unroll(p, batch.inputs, batch.steps, true);
      return learner.td_loss(p, theta_minus, batch, online, target, z_on, z_tg);
    };
    const auto analytic = loss_at(learner.params());
    const auto report = nn::finite_difference_check([&](const nn::ParameterVector<double>& p) { return loss_at(p).loss; },
                                                    learner.params(), analytic.grad, 1e-5, tol);
    res.checks += static_cast<long long>(report.tensors.size());
    for (const auto& t : report.tensors)
      if (!t.pass) {
        ++res.failures;
        res.detail += "point " + std::to_string(k) + ": " + t.name + " rel_err=" + std::to_string(t.max_rel_error) + "\n";
      }
    res.worst = std::max(res.worst, report.max_rel_error);
  }
  return res;
}

inline std::vector<FormationSample<double>> random_formation_batch(const FNetConfig& c, int samples, Rng& rng) {
  std::vector<FormationSample<double>> batch;
  std::uniform_int_distribution<int> kdist(1, c.slots);
  for (int s = 0; s < samples; ++s) {
    FormationSample<double> fs;
    fs.summaries.resize(c.summary_dim, c.n_agents);
    fill_normal(fs.summaries, rng);
    fs.targets = nn::Mat<double>::Zero(2 * c.slots, c.n_agents);
    for (int i = 0; i < c.n_agents; ++i) {
      std::vector<int> others;
      for (int j = 0; j < c.n_agents; ++j)
        if (j != i) others.push_back(j);
      std::shuffle(others.begin(), others.end(), rng);
      others.resize(std::min<std::size_t>(others.size(), static_cast<std::size_t>(kdist(rng))));
      for (std::size_t m = 0; m < others.size(); ++m) {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        fs.targets(2 * m, i) = 2.0 * u(rng);
        fs.targets(2 * m + 1, i) = u(rng);
      }
      fs.members.push_back(others);
    }
    batch.push_back(std::move(fs));
  }
  return batch;
}

/// F-Net gradients: L_f + L_KL through encoder and formation decoder, and L_g
/// through encoder and trajectory decoder. The flipped encoder update is a
/// linear combination of these two.
inline SuiteResult gradient_fnet(int points = 5, std::uint64_t seed = 4, double tol = 1e-4) {
  SuiteResult res;
  res.name = "gradients: F-Net encoder + decoders";
  FNetConfig cfg;
  cfg.summary_dim = 5;
  cfg.latent_dim = 3;
  cfg.hidden = 7;
  cfg.n_agents = 3;
  cfg.slots = 2;
  for (int k = 0; k < points; ++k) {
    Rng rng(seed * 1000 + static_cast<std::uint64_t>(k));
    FormationNet<double> net(cfg);
    net.init(rng);
    const auto batch = random_formation_batch(cfg, 4, rng);
    nn::Mat<double> noise(cfg.latent_dim, 4 * cfg.n_agents);
    fill_normal(noise, rng);
    struct Part {
      const char* name;
      typename FormationNet<double>::LossWeights w;
    };
    const Part parts[] = {{"L_f + L_KL", {1.0, 1.0, 0.0, 0.0}}, {"L_g", {0.0, 0.0, 1.0, 1.0}}};
    for (const auto& part : parts) {
      const auto g = net.loss_gradient(batch, noise, part.w);
      auto loss = [&](const nn::ParameterVector<double>& p) {
        const FNetLosses l = net.compute_losses(p, batch, noise);
        return part.w.f * l.formation + part.w.kl * l.kl + part.w.g * l.trajectory;
      };
      const auto report = nn::finite_difference_check(loss, net.params(), g.grad, 1e-5, tol);
      for (const auto& t : report.tensors) {
        // tensors outside this objective must carry zero gradient
        ++res.checks;
        if (!t.pass) {
          ++res.failures;
          res.detail += std::string(part.name) + " point " + std::to_string(k) + ": " + t.name +
                        " rel_err=" + std::to_string(t.max_rel_error) + "\n";
        }
      }
      res.worst = std::max(res.worst, report.max_rel_error);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Monotonic mixing and individual-global-max

inline SuiteResult monotonic_mixing(int probes = 1000, std::uint64_t seed = 5) {
  SuiteResult res;
  res.name = "monotonic mixing";
  Rng rng(seed);
  std::uniform_int_distribution<int> agents(1, 5);
  std::uniform_real_distribution<double> delta(1e-3, 1.0);
  for (int k = 0; k < probes; ++k) {
    MixerConfig mc;
    mc.n_agents = agents(rng);
    mc.state_dim = 3;
    mc.embed = 8;
    mc.hyper_hidden = 8;
    nn::Layout layout;
    Mixer<double> mixer(layout, mc);
    nn::ParameterVector<double> p(std::make_shared<nn::Layout>(layout));
    mixer.init(p, rng);
    nn::Vec<double> q(mc.n_agents), state(mc.state_dim);
    fill_normal(q, rng, 2.0);
    fill_normal(state, rng);
    std::uniform_int_distribution<int> which(0, mc.n_agents - 1);
    nn::Vec<double> q2 = q;
    q2(which(rng)) += delta(rng);
    const double before = mixer.mix(p, q, state), after = mixer.mix(p, q2, state);
    ++res.checks;
    if (after < before) {
      ++res.failures;
      res.worst = std::max(res.worst, before - after);
    }
  }
  return res;
}

/// Exhaustive joint argmax of the mixed value equals per-agent argmaxes.
inline SuiteResult igm_enumeration(int draws = 100, std::uint64_t seed = 6) {
  SuiteResult res;
  res.name = "IGM enumeration";
  Rng rng(seed);
  std::uniform_int_distribution<int> agents(1, 3), actions(2, 3);
  for (int k = 0; k < draws; ++k) {
    MixerConfig mc;
    mc.n_agents = agents(rng);
    mc.state_dim = 3;
    mc.embed = 8;
    mc.hyper_hidden = 8;
    const int A = actions(rng);
    nn::Layout layout;
    Mixer<double> mixer(layout, mc);
    nn::ParameterVector<double> p(std::make_shared<nn::Layout>(layout));
    mixer.init(p, rng);
    nn::Mat<double> qtab(A, mc.n_agents);
    fill_normal(qtab, rng);
    nn::Vec<double> state(mc.state_dim);
    fill_normal(state, rng);

    std::vector<int> greedy(mc.n_agents);
    for (int i = 0; i < mc.n_agents; ++i) qtab.col(i).maxCoeff(&greedy[i]);

    int total = 1;
    for (int i = 0; i < mc.n_agents; ++i) total *= A;
    nn::Mat<double> chosen(mc.n_agents, total), states(mc.state_dim, total);
    for (int j = 0; j < total; ++j) {
      for (int i = 0, code = j; i < mc.n_agents; ++i, code /= A) chosen(i, j) = qtab(code % A, i);
      states.col(j) = state;
    }
    const nn::Mat<double> qtot = mixer.forward(p, chosen, states);
    Eigen::Index best = 0;
    qtot.row(0).maxCoeff(&best);
    std::vector<int> joint(mc.n_agents);
    for (int i = 0, code = static_cast<int>(best); i < mc.n_agents; ++i, code /= A) joint[i] = code % A;
    ++res.checks;
    if (joint != greedy) ++res.failures;
  }
  return res;
}

// ---------------------------------------------------------------------------
// Discretization

/// discretize(x, l) against an integer evaluation of the rounding formula on
/// x = k/64, where x * 10^l is exact in double precision. The grid contains
/// exact half-way points for every l checked, and negative values.
inline SuiteResult discretization_grid(int points = 10000, int max_l = 3) {
  SuiteResult res;
  res.name = "discretization grid";
  for (int l = 0; l <= max_l; ++l) {
    std::int64_t pow10 = 1;
    for (int k = 0; k < l; ++k) pow10 *= 10;
    for (int k = -points / 2; k < points - points / 2; ++k) {
      const double x = k / 64.0;
      // x * 10^l = num / 64
      const std::int64_t num = static_cast<std::int64_t>(k) * pow10;
      std::int64_t fl = num / 64;
      std::int64_t rem = num % 64;
      if (rem < 0) {
        --fl;
        rem += 64;
      }
      const std::int64_t units = (2 * rem < 64) ? fl : fl + 1;
      const double expected = static_cast<double>(units) * std::pow(10.0, -l);
      const double got = discretize(x, l);
      ++res.checks;
      if (discretize_units(x, l) != units || got != expected) {
        ++res.failures;
        if (res.failures <= 5) res.detail += "x=" + std::to_string(x) + " l=" + std::to_string(l) + "\n";
      }
    }
  }
  return res;
}

inline std::vector<SuiteResult> all_suites() {
  std::vector<SuiteResult> out;
  for (auto s : {IndexStrategy::max, IndexStrategy::min, IndexStrategy::maxmin, IndexStrategy::all})
    out.push_back(equivalence_laws(s));
  out.push_back(elbo_bound());
  out.push_back(gradient_q());
  out.push_back(gradient_fnet());
  out.push_back(monotonic_mixing());
  out.push_back(igm_enumeration());
  out.push_back(discretization_grid());
  return out;
}

inline std::string describe(const SuiteResult& r) {
  std::ostringstream os;
  os << (r.pass() ? "PASS " : "FAIL ") << r.name << ": " << r.checks << " checks, " << r.failures << " failures";
  if (r.worst > 0.0) os << ", worst " << r.worst;
  return os.str();
}

}  // namespace fox::verify
