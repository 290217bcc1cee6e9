#pragma once

// Training loop: episode collection with epsilon-greedy agents, episodic
// replay, reward composition, F-Net and value-decomposition updates, target
// maintenance, periodic greedy evaluation and artifact emission.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fox/common.hpp"
#include "fox/counting.hpp"
#include "fox/env.hpp"
#include "fox/fnet.hpp"
#include "fox/formation.hpp"
#include "fox/nn.hpp"
#include "fox/qlearn.hpp"
#include "fox/rewards.hpp"

namespace fox {

// RNG stream tags. Each consumer owns its stream so switching a component off
// never shifts the random numbers seen by the others.
namespace streams {
inline constexpr std::uint64_t q_init = 1;
inline constexpr std::uint64_t fnet_init = 2;
inline constexpr std::uint64_t env = 3;
inline constexpr std::uint64_t action = 4;
inline constexpr std::uint64_t replay = 5;
inline constexpr std::uint64_t latent = 6;
inline constexpr std::uint64_t eval = 7;
}  // namespace streams

struct TrainConfig {
  std::uint64_t seed = 1;
  long long total_steps = 200000;
  double beta1 = 0.01;
  double beta2 = 0.01;
  int round_digits = 1;  // l
  int hash_bits = 9;     // m
  std::uint64_t hash_seed = 12345;
  double lambda_gf = 0.1;
  double lambda_reg = 0.1;
  double gamma = 0.99;
  double lr_q = 5e-4;
  double lr_fnet = 1e-3;
  nn::OptimizerKind q_optimizer = nn::OptimizerKind::rmsprop;
  double grad_clip = 10.0;
  double epsilon_start = 1.0;
  double epsilon_finish = 0.05;
  long long epsilon_anneal_steps = 50000;
  TargetMode target_mode = TargetMode::periodic;
  int target_interval = 200;
  double target_rate = 0.01;
  IndexStrategy strategy = IndexStrategy::maxmin;
  IntrinsicMode intrinsic_mode = IntrinsicMode::raw;
  CountTarget count_target = CountTarget::formation;
  double norm_decay = 0.99;
  int batch_size = 32;
  int buffer_capacity = 5000;
  int fnet_samples = 25;
  int prior_samples = 1;
  long long eval_interval = 10000;
  int eval_episodes = 32;
  int agent_hidden = 64;
  int mixing_embed = 32;
  int hypernet_hidden = 64;
  int fnet_hidden = 128;
  int latent_dim = 8;
  bool formation_head = true;
  bool train_formation_head = true;

  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    auto need = [&](bool ok, const char* msg) {
      if (!ok) out.emplace_back(msg);
    };
    need(total_steps >= 0, "total_steps must be >= 0");
    need(beta1 >= 0.0, "beta1 must be >= 0");
    need(beta2 >= 0.0, "beta2 must be >= 0");
    need(round_digits >= 0 && round_digits <= 9, "l must be in [0, 9]");
    need(hash_bits >= 1 && hash_bits <= 30, "m must be in [1, 30]");
    need(lambda_gf >= 0.0, "lambda_gf must be >= 0");
    need(lambda_reg >= 0.0, "lambda_reg must be >= 0");
    need(gamma >= 0.0 && gamma <= 1.0, "gamma must be in [0, 1]");
    need(lr_q > 0.0, "lr_q must be > 0");
    need(lr_fnet > 0.0, "lr_fnet must be > 0");
    need(grad_clip >= 0.0, "grad_clip must be >= 0");
    need(epsilon_start >= 0.0 && epsilon_start <= 1.0, "epsilon_start must be in [0, 1]");
    need(epsilon_finish >= 0.0 && epsilon_finish <= 1.0, "epsilon_finish must be in [0, 1]");
    need(epsilon_anneal_steps >= 0, "epsilon_anneal_steps must be >= 0");
    need(target_interval >= 1, "target_interval must be >= 1");
    need(target_rate > 0.0 && target_rate <= 1.0, "target_rate must be in (0, 1]");
    need(norm_decay >= 0.0 && norm_decay < 1.0, "norm_decay must be in [0, 1)");
    need(batch_size >= 1, "batch_size must be >= 1");
    need(buffer_capacity >= batch_size, "buffer_capacity must be >= batch_size");
    need(fnet_samples >= 1, "fnet_samples must be >= 1");
    need(prior_samples >= 1, "prior_samples must be >= 1");
    need(eval_interval >= 1, "eval_interval must be >= 1");
    need(eval_episodes >= 0, "eval_episodes must be >= 0");
    need(agent_hidden >= 1 && mixing_embed >= 1 && hypernet_hidden >= 1 && fnet_hidden >= 1 && latent_dim >= 1,
         "network sizes must be >= 1");
    return out;
  }

  bool fnet_enabled() const { return formation_head || beta2 > 0.0; }
};

/// One complete episode, stored in replay.
struct Episode {
  long long id = 0;
  std::vector<Eigen::MatrixXd> observations;  // length+1 joint observations, d x n
  std::vector<std::vector<int>> actions;      // length
  std::vector<double> r_ext;                  // length
  std::vector<double> r_exp;                  // length, keyed on the successor state at collection time
  std::vector<char> terminal;                 // length, 1 when the episode terminated (not truncated) there
  bool success = false;

  int length() const { return static_cast<int>(actions.size()); }
  double extrinsic_return() const {
    double r = 0.0;
    for (double x : r_ext) r += x;
    return r;
  }
};

/// Ring of complete episodes with uniform sampling without replacement.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw ConfigError("replay buffer capacity must be >= 1");
  }

  void insert(Episode e) {
    if (e.length() == 0 || e.observations.size() != e.actions.size() + 1)
      throw ContractError("replay buffer stores complete episodes only");
    if (episodes_.size() < capacity_) {
      episodes_.push_back(std::move(e));
    } else {
      episodes_[head_] = std::move(e);
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }

  /// Oldest first.
  const Episode& at(std::size_t k) const { return episodes_.at((head_ + k) % episodes_.size()); }

  bool contains(long long id) const {
    return std::any_of(episodes_.begin(), episodes_.end(), [&](const Episode& e) { return e.id == id; });
  }

  std::vector<const Episode*> sample(std::size_t batch, Rng& rng) const {
    if (batch > episodes_.size()) throw ContractError("replay buffer holds fewer episodes than the batch size");
    std::vector<std::size_t> idx(episodes_.size());
    for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
    std::vector<const Episode*> out;
    for (std::size_t k = 0; k < batch; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
      std::swap(idx[k], idx[pick(rng)]);
      out.push_back(&episodes_[idx[k]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Episode> episodes_;
};

struct MetricsRecord {
  long long step = 0;
  long long episodes = 0;
  double train_return = 0.0;  // mean extrinsic return of collected episodes in the interval
  double eval_return = std::nan("");
  double eval_success = std::nan("");
  double mean_r_exp = 0.0;          // per collected step
  double mean_r_aware = 0.0;        // per replayed step
  double mean_abs_r_aware = 0.0;
  std::size_t formation_coverage = 0;
  std::size_t count_coverage = 0;
  double loss_td = 0.0;
  double loss_f = 0.0;
  double loss_g = 0.0;
  double loss_kl = 0.0;
  double epsilon = 0.0;
  long long skipped_updates = 0;
};

inline void write_metrics_header(std::ostream& os) {
  os << "step,episodes,train_return,eval_return,eval_success,mean_r_exp,mean_r_aware,mean_abs_r_aware,"
        "formation_coverage,count_coverage,loss_td,loss_f,loss_g,loss_kl,epsilon,skipped_updates\n";
}

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

inline void write_metrics_row(std::ostream& os, const MetricsRecord& r) {
  os << r.step << ',' << r.episodes << ',' << format_number(r.train_return) << ',' << format_number(r.eval_return)
     << ',' << format_number(r.eval_success) << ',' << format_number(r.mean_r_exp) << ','
     << format_number(r.mean_r_aware) << ',' << format_number(r.mean_abs_r_aware) << ',' << r.formation_coverage
     << ',' << r.count_coverage << ',' << format_number(r.loss_td) << ',' << format_number(r.loss_f) << ','
     << format_number(r.loss_g) << ',' << format_number(r.loss_kl) << ',' << format_number(r.epsilon) << ','
     << r.skipped_updates << '\n';
}

/// Components of one replayed transition's reward, as used in the TD target.
struct RewardLogEntry {
  double r_ext = 0.0;
  double r_exp = 0.0;
  double r_aware = 0.0;
  double r_tot = 0.0;
  RewardNormalizer normalizer;
};

struct EvalResult {
  double mean_return = 0.0;
  double success_rate = 0.0;
};

template <typename S = float>
class Trainer {
 public:
  Trainer(GridWorldConfig env_cfg, TrainConfig cfg)
      : cfg_(std::move(cfg)),
        env_(std::move(env_cfg)),
        projector_(cfg_.hash_bits, env_.observation_dim(), cfg_.hash_seed),
        count_table_(cfg_.round_digits, cfg_.count_target),
        formation_table_(cfg_.round_digits, CountTarget::formation),
        buffer_(static_cast<std::size_t>(cfg_.buffer_capacity)),
        env_rng_(make_stream(cfg_.seed, streams::env)),
        action_rng_(make_stream(cfg_.seed, streams::action)),
        replay_rng_(make_stream(cfg_.seed, streams::replay)),
        latent_rng_(make_stream(cfg_.seed, streams::latent)),
        eval_rng_(make_stream(cfg_.seed, streams::eval)) {
    const auto p = cfg_.problems();
    if (!p.empty()) throw ConfigError("train config: " + p.front());
    if (env_.n_agents() < 2 && cfg_.fnet_enabled())
      throw ConfigError("formation components need at least two agents");
    normalizer_.decay = cfg_.norm_decay;
    weights_ = {cfg_.beta1, cfg_.beta2, cfg_.intrinsic_mode};

    const int n = env_.n_agents(), d = env_.observation_dim();
    LearnerConfig lc;
    lc.agent.input_dim = input_dim();
    lc.agent.hidden = cfg_.agent_hidden;
    lc.agent.n_actions = kNumActions;
    lc.agent.n_agents = n;
    lc.agent.latent_dim = cfg_.latent_dim;
    lc.agent.formation_head = cfg_.formation_head;
    lc.mixer.n_agents = n;
    lc.mixer.state_dim = d * n;
    lc.mixer.embed = cfg_.mixing_embed;
    lc.mixer.hyper_hidden = cfg_.hypernet_hidden;
    lc.gamma = cfg_.gamma;
    lc.lambda_reg = cfg_.lambda_reg;
    lc.lr = cfg_.lr_q;
    lc.optimizer = cfg_.q_optimizer;
    lc.grad_clip = cfg_.grad_clip;
    lc.target_mode = cfg_.target_mode;
    lc.target_interval = cfg_.target_interval;
    lc.target_rate = cfg_.target_rate;
    lc.train_formation_head = cfg_.train_formation_head;
    learner_ = std::make_unique<QLearner<S>>(lc);
    Rng q_init = make_stream(cfg_.seed, streams::q_init);
    learner_->init(q_init);
    if (cfg_.formation_head && !cfg_.train_formation_head) learner_->zero_formation_head();

    if (cfg_.fnet_enabled()) {
      FNetConfig fc;
      fc.summary_dim = cfg_.agent_hidden;
      fc.latent_dim = cfg_.latent_dim;
      fc.hidden = cfg_.fnet_hidden;
      fc.n_agents = n;
      fc.slots = max_index_set_size(cfg_.strategy, n);
      fc.hash_bits = cfg_.hash_bits;
      fnet_ = std::make_unique<FormationNet<S>>(fc);
      Rng f_init = make_stream(cfg_.seed, streams::fnet_init);
      fnet_->init(f_init);
      typename nn::Optimizer<S>::Options o;
      o.kind = nn::OptimizerKind::adam;
      o.lr = cfg_.lr_fnet;
      fnet_->set_optimizer(o);
    }
  }

  const TrainConfig& config() const { return cfg_; }
  const GridWorld& env() const { return env_; }
  const QLearner<S>& learner() const { return *learner_; }
  const FormationNet<S>* fnet() const { return fnet_.get(); }
  const VisitationTable& count_table() const { return count_table_; }
  const VisitationTable& formation_table() const { return formation_table_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const SimHashProjector& projector() const { return projector_; }
  long long env_steps() const { return env_steps_; }
  long long episodes() const { return episodes_; }
  const RewardNormalizer& normalizer() const { return normalizer_; }

  /// Called for every replayed real transition with the exact reward components.
  void set_reward_log(std::function<void(const RewardLogEntry&)> hook) { reward_log_ = std::move(hook); }

  int input_dim() const { return env_.observation_dim() + kNumActions + env_.n_agents(); }

  double epsilon() const {
    return epsilon_at(cfg_.epsilon_start, cfg_.epsilon_finish, cfg_.epsilon_anneal_steps, env_steps_);
  }

  /// Algorithm order: collect an episode, sample a batch, compute formations and
  /// intrinsic rewards, update the F-Net, update theta and theta^-, then store
  /// the new episode.
  void train_iteration() {
    Episode e = collect_episode();
    if (buffer_.size() >= static_cast<std::size_t>(cfg_.batch_size)) train_on_batch();
    buffer_.insert(std::move(e));
  }

  /// One epsilon-greedy episode; updates the visitation tables and step counters.
  Episode collect_episode() {
    const int n = env_.n_agents();
    Episode ep;
    ep.id = episodes_;
    auto [state, obs] = env_.reset(env_rng_);
    ep.observations.push_back(obs);
    nn::Mat<S> h = nn::Mat<S>::Zero(cfg_.agent_hidden, n);
    std::vector<int> last(n, -1);
    for (bool done = false; !done;) {
      const nn::Mat<S> x = agent_inputs(obs, last);
      h = learner_->agent().step(learner_->params(), x, h);
      nn::Mat<S> z;
      if (cfg_.formation_head) z = fnet_->sample_latents(h, latent_rng_);
      const nn::Mat<S> q = learner_->agent().heads(learner_->params(), h, cfg_.formation_head ? &z : nullptr).total();
      const std::vector<int> actions = select_actions(q, epsilon(), action_rng_);
      StepResult r = env_.step(state, actions);
      ++env_steps_;
      ep.actions.push_back(actions);
      ep.r_ext.push_back(r.reward);
      ep.r_exp.push_back(record_visit(r.observations));
      ep.terminal.push_back(r.done && !r.truncated ? 1 : 0);
      ep.observations.push_back(r.observations);
      if (r.done && !r.truncated) ep.success = true;
      stats_.r_exp_sum += ep.r_exp.back();
      ++stats_.collected_steps;
      state = std::move(r.state);
      obs = r.observations;
      last = actions;
      done = r.done;
    }
    ++episodes_;
    ++stats_.episodes;
    stats_.return_sum += ep.extrinsic_return();
    return ep;
  }

  /// r^exp of a successor joint observation under the configured count target,
  /// after recording the visit. Also tracks formation coverage.
  double record_visit(const Eigen::MatrixXd& obs) {
    const ExplorationState s(obs);
    const std::string fkey = formation_key(arrange_formation(s, cfg_.strategy, projector_), cfg_.round_digits);
    formation_table_.record_visit(fkey);
    switch (cfg_.count_target) {
      case CountTarget::formation:
        count_table_.record_visit(fkey);
        return count_table_.exploration_reward(fkey);
      case CountTarget::joint_observation: {
        const Eigen::VectorXd flat = Eigen::Map<const Eigen::VectorXd>(obs.data(), obs.size());
        const std::string key = vector_key(flat, cfg_.round_digits);
        count_table_.record_visit(key);
        return count_table_.exploration_reward(key);
      }
      case CountTarget::individual_observation: {
        double r = 0.0;
        for (int i = 0; i < s.n(); ++i) {
          const std::string key = vector_key(obs.col(i), cfg_.round_digits);
          count_table_.record_visit(key);
          r += count_table_.exploration_reward(key);
        }
        return r / s.n();
      }
    }
    return 0.0;
  }

  /// One gradient step from a replayed batch. Returns false when the update was
  /// skipped because of a non-finite loss or gradient.
  bool train_on_batch() {
    const std::vector<const Episode*> eps = buffer_.sample(static_cast<std::size_t>(cfg_.batch_size), replay_rng_);
    const int B = static_cast<int>(eps.size()), n = env_.n_agents(), d = env_.observation_dim();
    int T = 0;
    for (const Episode* e : eps) T = std::max(T, e->length());

    TdBatch<S> batch;
    batch.batch = B;
    batch.steps = T;
    batch.rewards = nn::Mat<S>::Zero(T, B);
    batch.terminal = nn::Mat<S>::Zero(T, B);
    batch.mask = nn::Mat<S>::Zero(T, B);
    for (int t = 0; t <= T; ++t) {
      nn::Mat<S> x = nn::Mat<S>::Zero(input_dim(), n * B);
      nn::Mat<S> st = nn::Mat<S>::Zero(d * n, B);
      for (int b = 0; b < B; ++b) {
        const Episode& e = *eps[b];
        if (t > e.length()) continue;
        const Eigen::MatrixXd& o = e.observations[t];
        for (int i = 0; i < n; ++i) {
          write_agent_input(x.col(i * B + b), o.col(i), t > 0 ? e.actions[t - 1][i] : -1, i);
          st.col(b).segment(i * d, d) = o.col(i).cast<S>();
        }
      }
      batch.inputs.push_back(std::move(x));
      batch.states.push_back(std::move(st));
    }
    for (int t = 0; t < T; ++t) {
      std::vector<int> a(static_cast<std::size_t>(n) * B, 0);
      for (int b = 0; b < B; ++b) {
        const Episode& e = *eps[b];
        if (t >= e.length()) continue;
        for (int i = 0; i < n; ++i) a[i * B + b] = e.actions[t][i];
        batch.mask(t, b) = S(1);
        batch.terminal(t, b) = e.terminal[t] ? S(1) : S(0);
      }
      batch.actions.push_back(std::move(a));
    }

    const auto online = learner_->unroll(learner_->params(), batch.inputs, T, true);
    const auto target = learner_->unroll(learner_->target_params(), batch.inputs, T + 1, false);

    std::vector<double> r_aware(static_cast<std::size_t>(T) * B, 0.0);
    std::vector<nn::Mat<S>> z_online, z_target;
    FNetLosses fl;
    if (fnet_) {
      std::vector<FormationSample<S>> samples;
      std::vector<std::pair<int, int>> where;  // (t, b)
      for (int t = 0; t < T; ++t)
        for (int b = 0; b < B; ++b) {
          const Episode& e = *eps[b];
          if (t >= e.length()) continue;
          FormationSample<S> fs;
          fs.summaries.resize(cfg_.agent_hidden, n);
          for (int i = 0; i < n; ++i) fs.summaries.col(i) = online.hidden[t].col(i * B + b);
          const auto sets = select_index_sets(ExplorationState(e.observations[t]), cfg_.strategy);
          for (const auto& s : sets) fs.members.push_back(s.members);
          fs.targets = formation_targets<S>(arrange_formation(ExplorationState(e.observations[t + 1]), sets, projector_),
                                            fnet_->config().slots, cfg_.hash_bits);
          samples.push_back(std::move(fs));
          where.emplace_back(t, b);
        }
      const std::vector<double> ra = fnet_->aware_reward(samples, latent_rng_, cfg_.prior_samples);
      for (std::size_t k = 0; k < ra.size(); ++k) {
        r_aware[static_cast<std::size_t>(where[k].first) * B + where[k].second] = ra[k];
        stats_.r_aware_sum += ra[k];
        stats_.r_aware_abs_sum += std::abs(ra[k]);
      }
      stats_.replayed_steps += static_cast<long long>(ra.size());
      normalizer_.observe(ra);

      if (cfg_.formation_head) {
        for (int t = 0; t < T; ++t) z_online.push_back(fnet_->sample_latents(online.hidden[t], latent_rng_));
        for (int t = 1; t <= T; ++t) z_target.push_back(fnet_->sample_latents(target.hidden[t], latent_rng_));
      }

      // F-Net step on a random subset of the replayed timesteps
      const std::size_t m = std::min<std::size_t>(static_cast<std::size_t>(cfg_.fnet_samples), samples.size());
      std::vector<std::size_t> idx(samples.size());
      for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
      std::vector<FormationSample<S>> sub;
      for (std::size_t k = 0; k < m; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
        std::swap(idx[k], idx[pick(latent_rng_)]);
        sub.push_back(samples[idx[k]]);
      }
      if (!fnet_->update(sub, latent_rng_, cfg_.lambda_gf, &fl)) ++stats_.skipped;
      stats_.loss_f += fl.formation;
      stats_.loss_g += fl.trajectory;
      stats_.loss_kl += fl.kl;
      ++stats_.fnet_updates;
    }

    for (int t = 0; t < T; ++t)
      for (int b = 0; b < B; ++b) {
        const Episode& e = *eps[b];
        if (t >= e.length()) continue;
        RewardLogEntry entry;
        entry.r_ext = e.r_ext[t];
        entry.r_exp = e.r_exp[t];
        entry.r_aware = r_aware[static_cast<std::size_t>(t) * B + b];
        entry.r_tot = total_reward(entry.r_ext, entry.r_exp, entry.r_aware, weights_, normalizer_);
        batch.rewards(t, b) = static_cast<S>(entry.r_tot);
        if (reward_log_) {
          entry.normalizer = normalizer_;
          reward_log_(entry);
        }
      }

    auto td = learner_->td_loss(learner_->params(), learner_->target_params(), batch, online, target, z_online,
                                z_target);
    const bool ok = learner_->apply(td);
    if (ok) {
      stats_.loss_td += td.loss;
      ++stats_.q_updates;
    } else {
      ++stats_.skipped;
      if (log_) *log_ << "skipped Q update at step " << env_steps_ << ": non-finite loss or gradient\n";
    }
    return ok;
  }

  /// Greedy (epsilon = 0) episodes on the evaluation stream; tables and
  /// counters are not touched.
  EvalResult evaluate(int episodes) {
    EvalResult res;
    if (episodes <= 0) return res;
    const int n = env_.n_agents();
    for (int k = 0; k < episodes; ++k) {
      auto [state, obs] = env_.reset(eval_rng_);
      nn::Mat<S> h = nn::Mat<S>::Zero(cfg_.agent_hidden, n);
      std::vector<int> last(n, -1);
      double ret = 0.0;
      bool success = false;
      for (bool done = false; !done;) {
        h = learner_->agent().step(learner_->params(), agent_inputs(obs, last), h);
        nn::Mat<S> z;
        if (cfg_.formation_head) z = fnet_->sample_latents(h, eval_rng_);
        const nn::Mat<S> q =
            learner_->agent().heads(learner_->params(), h, cfg_.formation_head ? &z : nullptr).total();
        last = select_actions(q, 0.0, eval_rng_);
        StepResult r = env_.step(state, last);
        ret += r.reward;
        success = success || (r.done && !r.truncated);
        done = r.done;
        state = std::move(r.state);
        obs = std::move(r.observations);
      }
      res.mean_return += ret / episodes;
      res.success_rate += (success ? 1.0 : 0.0) / episodes;
    }
    return res;
  }

  /// Trains until total_steps environment steps; a metrics row is produced each
  /// time the step counter crosses a multiple of eval_interval and once at the end.
  std::vector<MetricsRecord> train(const std::function<void(const MetricsRecord&)>& on_record = {}) {
    std::vector<MetricsRecord> rows;
    long long next_eval = cfg_.eval_interval;
    while (env_steps_ < cfg_.total_steps) {
      train_iteration();
      const bool finished = env_steps_ >= cfg_.total_steps;
      if (env_steps_ >= next_eval || finished) {
        rows.push_back(snapshot(true));
        if (on_record) on_record(rows.back());
        while (next_eval <= env_steps_) next_eval += cfg_.eval_interval;
      }
    }
    return rows;
  }

  /// Closes the current interval: averages of the accumulated statistics plus
  /// an optional greedy evaluation.
  MetricsRecord snapshot(bool with_eval) {
    MetricsRecord r;
    r.step = env_steps_;
    r.episodes = episodes_;
    auto mean = [](double sum, long long count) { return count > 0 ? sum / static_cast<double>(count) : 0.0; };
    r.train_return = mean(stats_.return_sum, stats_.episodes);
    r.mean_r_exp = mean(stats_.r_exp_sum, stats_.collected_steps);
    r.mean_r_aware = mean(stats_.r_aware_sum, stats_.replayed_steps);
    r.mean_abs_r_aware = mean(stats_.r_aware_abs_sum, stats_.replayed_steps);
    r.formation_coverage = formation_table_.coverage();
    r.count_coverage = count_table_.coverage();
    r.loss_td = mean(stats_.loss_td, stats_.q_updates);
    r.loss_f = mean(stats_.loss_f, stats_.fnet_updates);
    r.loss_g = mean(stats_.loss_g, stats_.fnet_updates);
    r.loss_kl = mean(stats_.loss_kl, stats_.fnet_updates);
    r.epsilon = epsilon();
    skipped_total_ += stats_.skipped;
    r.skipped_updates = skipped_total_;
    if (with_eval && cfg_.eval_episodes > 0) {
      const EvalResult ev = evaluate(cfg_.eval_episodes);
      r.eval_return = ev.mean_return;
      r.eval_success = ev.success_rate;
    }
    stats_ = {};
    return r;
  }

  void set_log(std::ostream* log) { log_ = log; }

  void write_checkpoints(const std::filesystem::path& dir, const std::string& tag) const {
    write_file(dir / ("q_" + tag + ".params"), [&](std::ostream& os) { nn::write_checkpoint(os, learner_->params()); });
    if (fnet_)
      write_file(dir / ("fnet_" + tag + ".params"), [&](std::ostream& os) { nn::write_checkpoint(os, fnet_->params()); });
  }

  void write_coverage(const std::filesystem::path& file, bool formation) const {
    write_file(file, [&](std::ostream& os) { (formation ? formation_table_ : count_table_).write_csv(os); });
  }

 private:
  struct IntervalStats {
    long long episodes = 0;
    double return_sum = 0.0;
    long long collected_steps = 0;
    double r_exp_sum = 0.0;
    long long replayed_steps = 0;
    double r_aware_sum = 0.0;
    double r_aware_abs_sum = 0.0;
    double loss_td = 0.0, loss_f = 0.0, loss_g = 0.0, loss_kl = 0.0;
    long long q_updates = 0, fnet_updates = 0, skipped = 0;
  };

  template <typename Col, typename Obs>
  void write_agent_input(Col&& col, const Obs& o, int last_action, int agent) const {
    const int d = env_.observation_dim();
    col.setZero();
    col.head(d) = o.template cast<S>();
    if (last_action >= 0) col(d + last_action) = S(1);
    col(d + kNumActions + agent) = S(1);
  }

  /// Agent inputs for one joint step: observation, one-hot previous action, one-hot agent id.
  nn::Mat<S> agent_inputs(const Eigen::MatrixXd& obs, const std::vector<int>& last) const {
    const int n = env_.n_agents();
    nn::Mat<S> x(input_dim(), n);
    for (int i = 0; i < n; ++i) write_agent_input(x.col(i), obs.col(i), last[i], i);
    return x;
  }

  template <typename F>
  static void write_file(const std::filesystem::path& file, F&& body) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw RuntimeError("cannot open " + file.string() + " for writing");
    body(os);
    if (!os) throw RuntimeError("write failed: " + file.string());
  }

  TrainConfig cfg_;
  GridWorld env_;
  SimHashProjector projector_;
  VisitationTable count_table_;
  VisitationTable formation_table_;
  ReplayBuffer buffer_;
  Rng env_rng_, action_rng_, replay_rng_, latent_rng_, eval_rng_;
  std::unique_ptr<QLearner<S>> learner_;
  std::unique_ptr<FormationNet<S>> fnet_;
  RewardWeights weights_;
  RewardNormalizer normalizer_;
  std::function<void(const RewardLogEntry&)> reward_log_;
  std::ostream* log_ = nullptr;
  IntervalStats stats_;
  long long env_steps_ = 0;
  long long episodes_ = 0;
  long long skipped_total_ = 0;
};

/// Full training run with artifacts in out_dir: metrics.csv (one row per
/// evaluation interval), coverage.csv, and parameter checkpoints at step 0 and
/// at the end.
template <typename S = float>
std::vector<MetricsRecord> run(const GridWorldConfig& env_cfg, const TrainConfig& cfg,
                               const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
  std::filesystem::create_directories(out_dir);
  Trainer<S> trainer(env_cfg, cfg);
  trainer.set_log(log);
  trainer.write_checkpoints(out_dir, "initial");
  std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw RuntimeError("cannot open metrics.csv in " + out_dir.string());
  write_metrics_header(metrics);
  metrics.flush();
  auto rows = trainer.train([&](const MetricsRecord& r) {
    write_metrics_row(metrics, r);
    metrics.flush();
    if (log) {
      *log << "step " << r.step << " return " << format_number(r.train_return) << " eval_success "
           << format_number(r.eval_success) << " coverage " << r.formation_coverage << '\n';
    }
  });
  trainer.write_coverage(out_dir / "coverage.csv", cfg.count_target == CountTarget::formation);
  if (cfg.total_steps > 0) trainer.write_checkpoints(out_dir, "final");
  return rows;
}

/// Intrinsic-reward-only training under one count target: extrinsic reward is
/// zero, only beta1 * r^exp is used, F-Net and the formation head are off.
inline TrainConfig pure_exploration_config(TrainConfig cfg, CountTarget target) {
  cfg.count_target = target;
  cfg.beta2 = 0.0;
  cfg.formation_head = false;
  return cfg;
}

template <typename S = float>
std::vector<MetricsRecord> pure_exploration_run(GridWorldConfig env_cfg, const TrainConfig& cfg, CountTarget target,
                                                const std::filesystem::path& out_dir, std::ostream* log = nullptr) {
  if (env_cfg.reward_mode != RewardMode::pure_exploration)
    throw ConfigError("pure_exploration_run requires reward_mode = pure_exploration");
  const TrainConfig pc = pure_exploration_config(cfg, target);
  const std::string tag(to_string(target));
  std::filesystem::create_directories(out_dir);
  Trainer<S> trainer(std::move(env_cfg), pc);
  trainer.set_log(log);
  std::ofstream metrics(out_dir / ("metrics_" + tag + ".csv"), std::ios::binary);
  if (!metrics) throw RuntimeError("cannot open metrics file in " + out_dir.string());
  write_metrics_header(metrics);
  auto rows = trainer.train([&](const MetricsRecord& r) {
    write_metrics_row(metrics, r);
    metrics.flush();
  });
  trainer.write_coverage(out_dir / ("coverage_" + tag + ".csv"), false);
  trainer.write_coverage(out_dir / ("formation_coverage_" + tag + ".csv"), true);
  return rows;
}

}  // namespace fox
