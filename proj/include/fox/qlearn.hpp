#pragma once

// Value decomposition learner: recurrent agent network with shared, local and
// formation heads, a monotonic hyper-network mixer, epsilon-greedy action
// selection, the TD loss with l1 regularisation on the local heads, and target
// network maintenance.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fox/nn.hpp"

namespace fox {

struct AgentNetConfig {
  int input_dim = 1;
  int hidden = 64;
  int n_actions = 5;
  int n_agents = 2;
  int latent_dim = 8;
  bool formation_head = true;
};

/// Shared trunk (dense + GRU) feeding Q^Shared, per-agent Q^Loc,i and Q^F(z).
/// Batched columns are agent-major: column i*B + b is agent i of sample b.
template <typename S>
class AgentNetwork {
 public:
  struct StepRecord {
    nn::Mat<S> x, fc_pre;
    typename nn::GruCell<S>::Record gru;
  };

  struct HeadOutputs {
    nn::Mat<S> shared;     // A x nB
    nn::Mat<S> local;      // A x nB
    nn::Mat<S> formation;  // A x nB (zero when disabled)
    nn::Mat<S> total() const { return shared + local + formation; }
  };

  AgentNetwork() = default;
  /// With attach_formation=false the formation head is registered later by
  /// attach_formation_head, so it can sit after other networks in the layout.
  AgentNetwork(nn::Layout& layout, const AgentNetConfig& cfg, bool attach_formation = true) : cfg_(cfg) {
    if (cfg.input_dim < 1 || cfg.hidden < 1 || cfg.n_actions < 1 || cfg.n_agents < 1)
      throw ConfigError("agent network: invalid configuration");
    fc_ = nn::Linear<S>(layout, "agent.fc", cfg.input_dim, cfg.hidden);
    gru_ = nn::GruCell<S>(layout, "agent.gru", cfg.hidden, cfg.hidden);
    shared_ = nn::Linear<S>(layout, "agent.q_shared", cfg.hidden, cfg.n_actions);
    for (int i = 0; i < cfg.n_agents; ++i)
      local_.emplace_back(layout, "agent.q_local" + std::to_string(i), cfg.hidden, cfg.n_actions);
    if (attach_formation) attach_formation_head(layout);
  }

  void attach_formation_head(nn::Layout& layout) {
    if (cfg_.formation_head) formation_ = nn::Linear<S>(layout, "agent.q_formation", cfg_.latent_dim, cfg_.n_actions);
  }

  const AgentNetConfig& config() const { return cfg_; }
  const nn::Linear<S>& formation_head() const { return formation_; }
  const nn::Linear<S>& shared_head() const { return shared_; }
  const nn::Linear<S>& local_head(int i) const { return local_.at(i); }

  void init(nn::ParameterVector<S>& p, Rng& rng, bool include_formation = true) const {
    fc_.init(p, rng);
    gru_.init(p, rng);
    shared_.init(p, rng);
    for (const auto& l : local_) l.init(p, rng);
    if (include_formation) init_formation_head(p, rng);
  }

  void init_formation_head(nn::ParameterVector<S>& p, Rng& rng) const {
    if (cfg_.formation_head) formation_.init(p, rng);
  }

  /// One trunk step: h' = GRU(relu(W x + b), h).
  nn::Mat<S> step(const nn::ParameterVector<S>& p, const nn::Mat<S>& x, const nn::Mat<S>& h,
                  StepRecord* rec = nullptr) const {
    nn::Mat<S> pre = fc_.forward(p, x);
    nn::Mat<S> a = pre.cwiseMax(S(0));
    nn::Mat<S> out = gru_.forward(p, a, h, rec ? &rec->gru : nullptr);
    if (rec) {
      rec->x = x;
      rec->fc_pre = std::move(pre);
    }
    return out;
  }

  /// Head outputs for hidden states h (H x nB) and latents z (L x nB, ignored
  /// when the formation head is disabled).
  HeadOutputs heads(const nn::ParameterVector<S>& p, const nn::Mat<S>& h, const nn::Mat<S>* z) const {
    const nn::Index nB = h.cols();
    const nn::Index B = nB / cfg_.n_agents;
    HeadOutputs out;
    out.shared = shared_.forward(p, h);
    out.local.resize(cfg_.n_actions, nB);
    for (int i = 0; i < cfg_.n_agents; ++i)
      out.local.middleCols(i * B, B) = local_[i].forward(p, h.middleCols(i * B, B));
    if (cfg_.formation_head && z) {
      out.formation = formation_.forward(p, *z);
    } else {
      out.formation = nn::Mat<S>::Zero(cfg_.n_actions, nB);
    }
    return out;
  }

  /// Backward through the heads; returns dL/dh.
  nn::Mat<S> heads_backward(const nn::ParameterVector<S>& p, const nn::Mat<S>& h, const nn::Mat<S>* z,
                            const nn::Mat<S>& dq, const nn::Mat<S>& dq_local_extra, nn::ParameterVector<S>& grad,
                            bool train_formation_head) const {
    const nn::Index B = h.cols() / cfg_.n_agents;
    nn::Mat<S> dh = shared_.backward(p, h, dq, grad);
    for (int i = 0; i < cfg_.n_agents; ++i) {
      nn::Mat<S> dl = dq.middleCols(i * B, B);
      if (dq_local_extra.size() > 0) dl += dq_local_extra.middleCols(i * B, B);
      dh.middleCols(i * B, B) += local_[i].backward(p, h.middleCols(i * B, B), dl, grad);
    }
    if (cfg_.formation_head && z && train_formation_head) formation_.backward(p, *z, dq, grad, false);
    return dh;
  }

  /// Returns dL/dh_prev; accumulates trunk gradients.
  nn::Mat<S> step_backward(const nn::ParameterVector<S>& p, const StepRecord& rec, const nn::Mat<S>& dh_out,
                           nn::ParameterVector<S>& grad) const {
    auto [da, dh_prev] = gru_.backward(p, rec.gru, dh_out, grad);
    nn::Mat<S> dpre = (rec.fc_pre.array() > S(0)).select(da, S(0));
    fc_.backward(p, rec.x, dpre, grad, false);
    return dh_prev;
  }

  /// Q^i(tau, z, .) = Q^Shared(tau, .) + Q^Loc,i(tau, .) + Q^F(z, .) for one agent.
  nn::Vec<S> individual_q(const nn::ParameterVector<S>& p, const nn::Vec<S>& summary, const nn::Vec<S>* z,
                          int agent) const {
    if (agent < 0 || agent >= cfg_.n_agents) throw ConfigError("individual_q: agent index out of range");
    nn::Mat<S> h(summary);
    nn::Vec<S> q = shared_.forward(p, h).col(0) + local_[agent].forward(p, h).col(0);
    if (cfg_.formation_head && z) q += formation_.forward(p, nn::Mat<S>(*z)).col(0);
    return q;
  }

 private:
  AgentNetConfig cfg_;
  nn::Linear<S> fc_;
  nn::GruCell<S> gru_;
  nn::Linear<S> shared_;
  std::vector<nn::Linear<S>> local_;
  nn::Linear<S> formation_;
};

struct MixerConfig {
  int n_agents = 2;
  int state_dim = 1;
  int embed = 32;
  int hyper_hidden = 64;
};

/// Q_tot = |w2(s)|^T elu(q^T |W1(s)| + b1(s)) + V(s); nonnegative mixing weights
/// make Q_tot monotone in every agent's chosen value.
template <typename S>
class Mixer {
 public:
  struct Record {
    nn::Mat<S> q, state;
    typename nn::Mlp<S>::Record w1, w2, v;
    nn::Mat<S> w1_raw, w2_raw, b1, hidden_pre, hidden;
  };

  Mixer() = default;
  Mixer(nn::Layout& layout, const MixerConfig& cfg) : cfg_(cfg) {
    using nn::Activation;
    if (cfg.n_agents < 1 || cfg.state_dim < 1 || cfg.embed < 1 || cfg.hyper_hidden < 1)
      throw ConfigError("mixer: invalid configuration");
    hyper_w1_ = nn::Mlp<S>(layout, "mixer.hyper_w1", cfg.state_dim, {cfg.hyper_hidden, cfg.n_agents * cfg.embed},
                           {Activation::relu, Activation::identity});
    hyper_b1_ = nn::Linear<S>(layout, "mixer.hyper_b1", cfg.state_dim, cfg.embed);
    hyper_w2_ = nn::Mlp<S>(layout, "mixer.hyper_w2", cfg.state_dim, {cfg.hyper_hidden, cfg.embed},
                           {Activation::relu, Activation::identity});
    value_ = nn::Mlp<S>(layout, "mixer.value", cfg.state_dim, {cfg.embed, 1}, {Activation::relu, Activation::identity});
  }

  const MixerConfig& config() const { return cfg_; }
  const nn::Mlp<S>& hyper_w1() const { return hyper_w1_; }
  const nn::Linear<S>& hyper_b1() const { return hyper_b1_; }
  const nn::Mlp<S>& hyper_w2() const { return hyper_w2_; }
  const nn::Mlp<S>& value() const { return value_; }

  void init(nn::ParameterVector<S>& p, Rng& rng) const {
    hyper_w1_.init(p, rng);
    hyper_b1_.init(p, rng);
    hyper_w2_.init(p, rng);
    value_.init(p, rng);
  }

  /// q: n x N chosen values, state: state_dim x N. Returns 1 x N.
  nn::Mat<S> forward(const nn::ParameterVector<S>& p, const nn::Mat<S>& q, const nn::Mat<S>& state,
                     Record* rec = nullptr) const {
    if (q.rows() != cfg_.n_agents || state.rows() != cfg_.state_dim || q.cols() != state.cols())
      throw ConfigError("mixer: input shape mismatch");
    Record local;
    Record& r = rec ? *rec : local;
    const nn::Index N = q.cols(), E = cfg_.embed, n = cfg_.n_agents;
    r.q = q;
    r.state = state;
    r.w1_raw = hyper_w1_.forward(p, state, &r.w1);
    r.b1 = hyper_b1_.forward(p, state);
    r.w2_raw = hyper_w2_.forward(p, state, &r.w2);
    const nn::Mat<S> v = value_.forward(p, state, &r.v);
    r.hidden_pre = r.b1;
    for (nn::Index c = 0; c < N; ++c)
      for (nn::Index i = 0; i < n; ++i)
        r.hidden_pre.col(c) += q(i, c) * r.w1_raw.col(c).segment(i * E, E).cwiseAbs();
    r.hidden = nn::activate(nn::Activation::elu, r.hidden_pre);
    nn::Mat<S> out = v;
    out += (r.hidden.array() * r.w2_raw.array().abs()).colwise().sum().matrix();
    return out;
  }

  /// Returns dL/dq (n x N); accumulates mixer gradients.
  nn::Mat<S> backward(const nn::ParameterVector<S>& p, const Record& r, const nn::Mat<S>& dout,
                      nn::ParameterVector<S>& grad) const {
    const nn::Index N = r.q.cols(), E = cfg_.embed, n = cfg_.n_agents;
    value_.backward(p, r.v, dout, grad, false);
    const nn::Mat<S> w2 = r.w2_raw.cwiseAbs();
    const nn::Mat<S> sign_w2 = r.w2_raw.unaryExpr([](S x) { return S((x > S(0)) - (x < S(0))); });
    nn::Mat<S> dw2 = (r.hidden.array().rowwise() * dout.row(0).array()).matrix();
    hyper_w2_.backward(p, r.w2, (dw2.array() * sign_w2.array()).matrix(), grad, false);
    nn::Mat<S> dhidden = (w2.array().rowwise() * dout.row(0).array()).matrix();
    const nn::Mat<S> dpre = nn::activation_backward(nn::Activation::elu, r.hidden_pre, r.hidden, dhidden);
    hyper_b1_.backward(p, r.state, dpre, grad, false);
    nn::Mat<S> dw1(n * E, N);
    nn::Mat<S> dq(n, N);
    for (nn::Index c = 0; c < N; ++c) {
      for (nn::Index i = 0; i < n; ++i) {
        const auto raw = r.w1_raw.col(c).segment(i * E, E);
        const auto sign = raw.unaryExpr([](S x) { return S((x > S(0)) - (x < S(0))); });
        dw1.col(c).segment(i * E, E) = (r.q(i, c) * dpre.col(c).array() * sign.array()).matrix();
        dq(i, c) = raw.cwiseAbs().dot(dpre.col(c));
      }
    }
    hyper_w1_.backward(p, r.w1, dw1, grad, false);
    return dq;
  }

  S mix(const nn::ParameterVector<S>& p, const nn::Vec<S>& chosen_q, const nn::Vec<S>& state) const {
    return forward(p, nn::Mat<S>(chosen_q), nn::Mat<S>(state))(0, 0);
  }

 private:
  MixerConfig cfg_;
  nn::Mlp<S> hyper_w1_;
  nn::Linear<S> hyper_b1_;
  nn::Mlp<S> hyper_w2_;
  nn::Mlp<S> value_;
};

// ---------------------------------------------------------------------------
// Action selection

/// Linear epsilon schedule from `start` to `finish` over `anneal_steps`.
inline double epsilon_at(double start, double finish, long long anneal_steps, long long step) {
  if (anneal_steps <= 0 || step >= anneal_steps) return finish;
  const double frac = static_cast<double>(step) / static_cast<double>(anneal_steps);
  return start + (finish - start) * frac;
}

/// q: A x n action values. available: A x n mask (empty means all available).
/// With probability epsilon an agent acts uniformly over its available actions,
/// otherwise greedily with ties to the lowest action id.
template <typename S>
std::vector<int> select_actions(const nn::Mat<S>& q, double epsilon, Rng& rng,
                                const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& available = {}) {
  if (epsilon < 0.0 || epsilon > 1.0) throw ConfigError("select_actions: epsilon must be in [0, 1]");
  const bool masked = available.size() > 0;
  if (masked && (available.rows() != q.rows() || available.cols() != q.cols()))
    throw ConfigError("select_actions: availability mask shape mismatch");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> actions(q.cols());
  for (nn::Index i = 0; i < q.cols(); ++i) {
    std::vector<int> avail;
    for (nn::Index a = 0; a < q.rows(); ++a)
      if (!masked || available(a, i)) avail.push_back(static_cast<int>(a));
    if (avail.empty()) throw ConfigError("select_actions: agent " + std::to_string(i) + " has no available action");
    if (unit(rng) < epsilon) {
      std::uniform_int_distribution<std::size_t> pick(0, avail.size() - 1);
      actions[i] = avail[pick(rng)];
    } else {
      int best = avail.front();
      for (int a : avail)
        if (q(a, i) > q(best, i)) best = a;
      actions[i] = best;
    }
  }
  return actions;
}

// ---------------------------------------------------------------------------
// TD learning

/// Padded batch of B episodes with up to T transitions each.
template <typename S>
struct TdBatch {
  int batch = 0;                     // B
  int steps = 0;                     // T (transitions)
  std::vector<nn::Mat<S>> inputs;    // T+1 entries, input_dim x nB (agent-major)
  std::vector<nn::Mat<S>> states;    // T+1 entries, state_dim x B
  std::vector<std::vector<int>> actions;  // T entries, nB actions
  nn::Mat<S> rewards;                // T x B, total reward
  nn::Mat<S> terminal;               // T x B, 1 when the transition ends the episode by termination
  nn::Mat<S> mask;                   // T x B, 1 for real transitions
};

enum class TargetMode { periodic, ema };

struct LearnerConfig {
  AgentNetConfig agent;
  MixerConfig mixer;
  double gamma = 0.99;
  double lambda_reg = 0.1;
  double lr = 5e-4;
  nn::OptimizerKind optimizer = nn::OptimizerKind::rmsprop;
  double grad_clip = 10.0;
  TargetMode target_mode = TargetMode::periodic;
  int target_interval = 200;
  double target_rate = 0.01;
  bool train_formation_head = true;
};

/// theta_minus <- (1 - rate) * theta_minus + rate * theta.
template <typename S>
void update_target(const nn::ParameterVector<S>& theta, nn::ParameterVector<S>& theta_minus, double rate) {
  if (!(theta.layout() == theta_minus.layout())) throw ConfigError("update_target: layouts differ");
  if (rate == 1.0) {
    theta_minus.mutable_values() = theta.values();
    return;
  }
  const S r = static_cast<S>(rate);
  auto& m = theta_minus.mutable_values();
  for (nn::Index k = 0; k < m.size(); ++k) m(k) = (S(1) - r) * m(k) + r * theta.values()(k);
}

template <typename S>
class QLearner {
 public:
  using LatentFn = std::function<nn::Mat<S>(const nn::Mat<S>& hidden)>;

  struct Unroll {
    std::vector<nn::Mat<S>> hidden;  // hidden after each input step
    std::vector<typename AgentNetwork<S>::StepRecord> records;
  };

  struct TdResult {
    double loss = 0.0;      // td + regulariser
    double td = 0.0;
    double reg = 0.0;
    nn::ParameterVector<S> grad;
  };

  explicit QLearner(const LearnerConfig& cfg) : cfg_(cfg) {
    auto layout = std::make_shared<nn::Layout>();
    // formation head last: with it disabled the remaining parameters are laid
    // out and initialised exactly as without it
    agent_ = AgentNetwork<S>(*layout, cfg.agent, false);
    mixer_ = Mixer<S>(*layout, cfg.mixer);
    agent_.attach_formation_head(*layout);
    params_ = nn::ParameterVector<S>(layout);
    target_ = nn::ParameterVector<S>(layout);
    typename nn::Optimizer<S>::Options o;
    o.kind = cfg.optimizer;
    o.lr = cfg.lr;
    optimizer_ = nn::Optimizer<S>(o, params_.size());
  }

  const LearnerConfig& config() const { return cfg_; }
  const AgentNetwork<S>& agent() const { return agent_; }
  const Mixer<S>& mixer() const { return mixer_; }
  const nn::ParameterVector<S>& params() const { return params_; }
  nn::ParameterVector<S>& mutable_params() { return params_; }
  const nn::ParameterVector<S>& target_params() const { return target_; }
  nn::ParameterVector<S>& mutable_target_params() { return target_; }
  long long train_steps() const { return train_steps_; }

  void init(Rng& rng) {
    agent_.init(params_, rng, false);
    mixer_.init(params_, rng);
    agent_.init_formation_head(params_, rng);
    target_ = params_;
  }

  /// Zeroes the formation head (used to reproduce plain value decomposition).
  void zero_formation_head() {
    if (!cfg_.agent.formation_head) return;
    params_.mutable_tensor(agent_.formation_head().weight_id()).setZero();
    params_.mutable_tensor(agent_.formation_head().bias_id()).setZero();
    target_ = params_;
  }

  Unroll unroll(const nn::ParameterVector<S>& p, const std::vector<nn::Mat<S>>& inputs, std::size_t steps,
                bool keep_records) const {
    Unroll u;
    if (inputs.empty()) return u;
    nn::Mat<S> h = nn::Mat<S>::Zero(cfg_.agent.hidden, inputs.front().cols());
    for (std::size_t t = 0; t < steps; ++t) {
      if (keep_records) {
        u.records.emplace_back();
        h = agent_.step(p, inputs[t], h, &u.records.back());
      } else {
        h = agent_.step(p, inputs[t], h);
      }
      u.hidden.push_back(h);
    }
    return u;
  }

  /// Full TD loss and gradient; latent_fn maps hidden states to latents for
  /// the formation head (may be empty when that head is disabled).
  TdResult td_loss(const TdBatch<S>& batch, const LatentFn& latent_fn) const {
    const Unroll online = unroll(params_, batch.inputs, batch.steps, true);
    const Unroll target = unroll(target_, batch.inputs, batch.steps + 1, false);
    std::vector<nn::Mat<S>> z_online, z_target;
    if (cfg_.agent.formation_head && latent_fn) {
      for (int t = 0; t < batch.steps; ++t) z_online.push_back(latent_fn(online.hidden[t]));
      for (int t = 1; t <= batch.steps; ++t) z_target.push_back(latent_fn(target.hidden[t]));
    }
    return td_loss(params_, target_, batch, online, target, z_online, z_target);
  }

  /// TD loss from precomputed unrolls. z_target[t] belongs to step t+1.
  TdResult td_loss(const nn::ParameterVector<S>& theta, const nn::ParameterVector<S>& theta_minus,
                   const TdBatch<S>& batch, const Unroll& online, const Unroll& target,
                   const std::vector<nn::Mat<S>>& z_online, const std::vector<nn::Mat<S>>& z_target) const {
    const int T = batch.steps, B = batch.batch, n = cfg_.agent.n_agents, A = cfg_.agent.n_actions;
    const bool use_z = cfg_.agent.formation_head && !z_online.empty();
    TdResult res;
    res.grad = theta.zeros_like();
    const double count = std::max<double>(static_cast<double>(batch.mask.sum()), 1.0);
    const double reg_scale = cfg_.lambda_reg / (count * n * A);

    std::vector<nn::Mat<S>> dh(T);
    for (int t = 0; t < T; ++t) {
      const nn::Mat<S>* z = use_z ? &z_online[t] : nullptr;
      const auto heads = agent_.heads(theta, online.hidden[t], z);
      const nn::Mat<S> q = heads.total();
      nn::Mat<S> chosen(n, B);
      for (int i = 0; i < n; ++i)
        for (int b = 0; b < B; ++b) chosen(i, b) = q(batch.actions[t][i * B + b], i * B + b);
      typename Mixer<S>::Record rec;
      const nn::Mat<S> qtot = mixer_.forward(theta, chosen, batch.states[t], &rec);

      const nn::Mat<S>* zt = use_z ? &z_target[t] : nullptr;
      const nn::Mat<S> q_next = agent_.heads(theta_minus, target.hidden[t + 1], zt).total();
      nn::Mat<S> best(n, B);
      for (int i = 0; i < n; ++i)
        for (int b = 0; b < B; ++b) best(i, b) = q_next.col(i * B + b).maxCoeff();
      const nn::Mat<S> qtot_next = mixer_.forward(theta_minus, best, batch.states[t + 1]);

      nn::Mat<S> dqtot(1, B);
      for (int b = 0; b < B; ++b) {
        const double m = batch.mask(t, b);
        const double y = batch.rewards(t, b) + cfg_.gamma * (1.0 - batch.terminal(t, b)) * qtot_next(0, b);
        const double err = static_cast<double>(qtot(0, b)) - y;
        res.td += m * err * err / count;
        dqtot(0, b) = static_cast<S>(2.0 * m * err / count);
      }
      nn::Mat<S> dlocal_reg = nn::Mat<S>::Zero(A, n * B);
      for (int i = 0; i < n; ++i)
        for (int b = 0; b < B; ++b) {
          const double m = batch.mask(t, b);
          if (m == 0.0) continue;
          for (int a = 0; a < A; ++a) {
            const S v = heads.local(a, i * B + b);
            res.reg += reg_scale * m * std::abs(static_cast<double>(v));
            dlocal_reg(a, i * B + b) = static_cast<S>(reg_scale * m) * S((v > S(0)) - (v < S(0)));
          }
        }
      const nn::Mat<S> dchosen = mixer_.backward(theta, rec, dqtot, res.grad);
      nn::Mat<S> dq = nn::Mat<S>::Zero(A, n * B);
      for (int i = 0; i < n; ++i)
        for (int b = 0; b < B; ++b) dq(batch.actions[t][i * B + b], i * B + b) = dchosen(i, b);
      dh[t] = agent_.heads_backward(theta, online.hidden[t], z, dq, dlocal_reg, res.grad, cfg_.train_formation_head);
    }
    nn::Mat<S> carry = nn::Mat<S>::Zero(cfg_.agent.hidden, n * B);
    for (int t = T - 1; t >= 0; --t) carry = agent_.step_backward(theta, online.records[t], dh[t] + carry, res.grad);
    res.loss = res.td + res.reg;
    return res;
  }

  /// Applies one optimizer step from a TD result. Returns false for non-finite gradients.
  bool apply(TdResult& res) {
    if (!std::isfinite(res.loss) || !res.grad.all_finite()) return false;
    if (cfg_.grad_clip > 0.0) nn::clip_grad_norm(res.grad, static_cast<S>(cfg_.grad_clip));
    optimizer_.step(params_, res.grad);
    ++train_steps_;
    if (cfg_.target_mode == TargetMode::ema) {
      update_target(params_, target_, cfg_.target_rate);
    } else if (cfg_.target_interval > 0 && train_steps_ % cfg_.target_interval == 0) {
      update_target(params_, target_, 1.0);
    }
    return true;
  }

 private:
  LearnerConfig cfg_;
  AgentNetwork<S> agent_;
  Mixer<S> mixer_;
  nn::ParameterVector<S> params_;
  nn::ParameterVector<S> target_;
  nn::Optimizer<S> optimizer_;
  long long train_steps_ = 0;
};

}  // namespace fox
