#pragma once

// Formation-awareness network: a variational encoder over trajectory
// summaries, a decoder predicting each agent's next individual formation from
// the latents of its index set, and a trajectory decoder trained against the
// encoder (gradient flipping). Also the awareness reward and an exhaustive
// oracle for the mutual-information lower bound.

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fox/formation.hpp"
#include "fox/nn.hpp"

namespace fox {

struct FNetConfig {
  int summary_dim = 64;
  int latent_dim = 8;
  int hidden = 128;
  int n_agents = 2;
  int slots = 1;      // largest index-set size k for the strategy in use
  int hash_bits = 9;  // m, used to scale angle codes into [0, 1)
  double log_std_min = -10.0;
  double log_std_max = 2.0;
};

template <typename S>
struct LatentVariable {
  nn::Vec<S> value;
  nn::Vec<S> mean;
  nn::Vec<S> log_std;
};

struct FNetLosses {
  double formation = 0.0;   // L_f
  double trajectory = 0.0;  // L_g
  double kl = 0.0;          // L_KL
};

/// One timestep across all agents.
template <typename S>
struct FormationSample {
  nn::Mat<S> summaries;                   // summary_dim x n
  std::vector<std::vector<int>> members;  // F^i for each agent, in index-set order
  nn::Mat<S> targets;                     // 2*slots x n, next individual formations (zero padded)
};

/// Flattened regression target of a formation: per member (distance, code * 2^-m),
/// zero padded to `slots` members. Column i belongs to agent i.
template <typename S>
nn::Mat<S> formation_targets(const Formation& f, int slots, int hash_bits) {
  nn::Mat<S> t = nn::Mat<S>::Zero(2 * slots, static_cast<nn::Index>(f.per_agent.size()));
  const double scale = std::ldexp(1.0, -hash_bits);
  for (std::size_t i = 0; i < f.per_agent.size(); ++i) {
    if (static_cast<int>(f.per_agent[i].size()) > slots) throw ConfigError("formation_targets: too many members");
    for (std::size_t k = 0; k < f.per_agent[i].size(); ++k) {
      t(2 * k, i) = static_cast<S>(f.per_agent[i][k].distance);
      t(2 * k + 1, i) = static_cast<S>(f.per_agent[i][k].angle_code * scale);
    }
  }
  return t;
}

/// Closed-form KL(N(mean, exp(log_std)^2) || N(0, I)).
template <typename A, typename B>
double gaussian_kl(const Eigen::MatrixBase<A>& mean, const Eigen::MatrixBase<B>& log_std) {
  double kl = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double mu = static_cast<double>(mean(k)), ls = static_cast<double>(log_std(k));
    kl += 0.5 * (mu * mu + std::exp(2.0 * ls) - 1.0 - 2.0 * ls);
  }
  return kl;
}

template <typename S>
class FormationNet {
 public:
  /// Weights of the three objectives. The encoder sees `encoder_g` times the
  /// trajectory-loss gradient while the trajectory decoder sees `g` times it.
  struct LossWeights {
    double f = 1.0;
    double kl = 1.0;
    double g = 1.0;
    double encoder_g = 1.0;
  };

  struct Gradient {
    FNetLosses losses;
    nn::ParameterVector<S> grad;
  };

  explicit FormationNet(const FNetConfig& cfg) : cfg_(cfg) {
    if (cfg.summary_dim < 1 || cfg.latent_dim < 1 || cfg.hidden < 1 || cfg.n_agents < 2 || cfg.slots < 1)
      throw ConfigError("fnet: invalid configuration");
    auto layout = std::make_shared<nn::Layout>();
    using nn::Activation;
    const nn::Index H = cfg.hidden, L = cfg.latent_dim;
    encoder_ = nn::Mlp<S>(*layout, "encoder", cfg.summary_dim, {H, H, 2 * L},
                          {Activation::relu, Activation::relu, Activation::identity});
    formation_decoder_ = nn::Mlp<S>(*layout, "formation_decoder", (cfg.slots + 1) * L, {H, H, 2 * cfg.slots},
                                    {Activation::relu, Activation::relu, Activation::identity});
    trajectory_decoder_ = nn::Mlp<S>(*layout, "trajectory_decoder", L, {H, H, cfg.summary_dim},
                                     {Activation::relu, Activation::relu, Activation::identity});
    params_ = nn::ParameterVector<S>(layout);
  }

  const FNetConfig& config() const { return cfg_; }
  const nn::ParameterVector<S>& params() const { return params_; }
  nn::ParameterVector<S>& mutable_params() { return params_; }
  const nn::Mlp<S>& encoder() const { return encoder_; }
  const nn::Mlp<S>& formation_decoder() const { return formation_decoder_; }
  const nn::Mlp<S>& trajectory_decoder() const { return trajectory_decoder_; }

  void init(Rng& rng) {
    encoder_.init(params_, rng);
    formation_decoder_.init(params_, rng);
    trajectory_decoder_.init(params_, rng);
  }

  /// Encoder statistics for a batch of summaries (columns): (mean, clamped log_std).
  std::pair<nn::Mat<S>, nn::Mat<S>> encode(const nn::Mat<S>& summaries) const {
    return encode_with(params_, summaries, nullptr);
  }

  /// z = mean + exp(log_std) * noise, column-wise.
  nn::Mat<S> sample_latents(const nn::Mat<S>& summaries, const nn::Mat<S>& noise) const {
    auto [mean, log_std] = encode(summaries);
    if (noise.rows() != mean.rows() || noise.cols() != mean.cols()) throw ConfigError("fnet: noise shape mismatch");
    return mean + (log_std.array().exp() * noise.array()).matrix();
  }

  nn::Mat<S> sample_latents(const nn::Mat<S>& summaries, Rng& rng) const {
    return sample_latents(summaries, standard_normal(cfg_.latent_dim, summaries.cols(), rng));
  }

  LatentVariable<S> encode_and_sample(const nn::Vec<S>& summary, const nn::Vec<S>& noise) const {
    if (summary.size() != cfg_.summary_dim || noise.size() != cfg_.latent_dim)
      throw ConfigError("encode_and_sample: dimension mismatch");
    auto [mean, log_std] = encode(nn::Mat<S>(summary));
    LatentVariable<S> z;
    z.mean = mean.col(0);
    z.log_std = log_std.col(0);
    z.value = z.mean + (z.log_std.array().exp() * noise.array()).matrix();
    return z;
  }

  /// Prediction of agent i's next individual formation from the latents of
  /// F^{i+}: own latent first, then the index-set members in order.
  nn::Vec<S> predict_next_formation(const std::vector<nn::Vec<S>>& latents) const {
    const int k = static_cast<int>(latents.size()) - 1;
    if (k < 1 || k > cfg_.slots)
      throw ConfigError("predict_next_formation: expected 2.." + std::to_string(cfg_.slots + 1) + " latents");
    nn::Mat<S> in = nn::Mat<S>::Zero((cfg_.slots + 1) * cfg_.latent_dim, 1);
    for (int s = 0; s <= k; ++s) {
      if (latents[s].size() != cfg_.latent_dim) throw ConfigError("predict_next_formation: latent size mismatch");
      in.block(s * cfg_.latent_dim, 0, cfg_.latent_dim, 1) = latents[s];
    }
    nn::Mat<S> out = formation_decoder_.forward(params_, in);
    return out.col(0).head(2 * k);
  }

  /// Losses and weighted parameter gradient for a batch with given latent noise
  /// (latent_dim x batch*n, column s*n + i).
  Gradient loss_gradient(const std::vector<FormationSample<S>>& batch, const nn::Mat<S>& noise,
                         const LossWeights& w) const {
    return evaluate(params_, batch, noise, w, true);
  }

  FNetLosses compute_losses(const std::vector<FormationSample<S>>& batch, const nn::Mat<S>& noise) const {
    return evaluate(params_, batch, noise, {}, false).losses;
  }

  /// Same computation against arbitrary parameters (used by gradient checks).
  FNetLosses compute_losses(const nn::ParameterVector<S>& params, const std::vector<FormationSample<S>>& batch,
                            const nn::Mat<S>& noise) const {
    return evaluate(params, batch, noise, {}, false).losses;
  }

  /// One step: decoders descend their own losses, the encoder descends
  /// L_f + L_KL - lambda_gf * L_g. Returns false (and leaves parameters
  /// untouched) when the gradient is not finite.
  bool update(const std::vector<FormationSample<S>>& batch, Rng& rng, double lambda_gf, FNetLosses* losses = nullptr) {
    const nn::Mat<S> noise = standard_normal(cfg_.latent_dim, batch_columns(batch), rng);
    return update_with_noise(batch, noise, lambda_gf, losses);
  }

  bool update_with_noise(const std::vector<FormationSample<S>>& batch, const nn::Mat<S>& noise, double lambda_gf,
                         FNetLosses* losses = nullptr) {
    Gradient g = loss_gradient(batch, noise, {1.0, 1.0, 1.0, -lambda_gf});
    if (losses) *losses = g.losses;
    if (!g.grad.all_finite()) return false;
    ensure_optimizer();
    optimizer_.step(params_, g.grad);
    return true;
  }

  void set_optimizer(const typename nn::Optimizer<S>::Options& opts) {
    optimizer_ = nn::Optimizer<S>(opts, params_.size());
    optimizer_ready_ = true;
  }

  /// Awareness reward per sample: mean over agents of
  ///   -MSE(true, prediction with encoder latents)
  ///   + 1/(k+1) * sum_j MSE(true, prediction with z^j drawn from N(0, I)).
  std::vector<double> aware_reward(const std::vector<FormationSample<S>>& batch, Rng& rng, int prior_samples = 1) const {
    const nn::Mat<S> noise = standard_normal(cfg_.latent_dim, batch_columns(batch), rng);
    const nn::Index N = batch_columns(batch);
    const int K = cfg_.slots;
    std::vector<nn::Mat<S>> priors;
    priors.reserve(static_cast<std::size_t>((K + 1) * prior_samples));
    for (int r = 0; r < (K + 1) * prior_samples; ++r) priors.push_back(standard_normal(cfg_.latent_dim, N, rng));
    return aware_reward_with(batch, noise, priors, prior_samples);
  }

  /// Deterministic variant: priors[j * prior_samples + r] replaces slot j on draw r.
  std::vector<double> aware_reward_with(const std::vector<FormationSample<S>>& batch, const nn::Mat<S>& noise,
                                        const std::vector<nn::Mat<S>>& priors, int prior_samples) const {
    if (prior_samples < 1) throw ConfigError("aware_reward: prior_samples must be >= 1");
    const Columns cols = gather(batch);
    const nn::Index N = cols.summaries.cols();
    const int K = cfg_.slots;
    if (static_cast<int>(priors.size()) < (K + 1) * prior_samples)
      throw ConfigError("aware_reward: not enough prior draws");
    auto [mean, log_std] = encode_with(params_, cols.summaries, nullptr);
    const nn::Mat<S> z = mean + (log_std.array().exp() * noise.array()).matrix();
    nn::Mat<S> input = decoder_input(z, cols);
    const std::vector<double> full = column_mse(formation_decoder_.forward(params_, input), cols);

    std::vector<double> replaced_sum(N, 0.0);
    const nn::Index L = cfg_.latent_dim;
    for (int j = 0; j <= K; ++j) {
      for (int r = 0; r < prior_samples; ++r) {
        nn::Mat<S> swapped = input;
        const nn::Mat<S>& prior = priors[static_cast<std::size_t>(j * prior_samples + r)];
        for (nn::Index c = 0; c < N; ++c)
          if (j <= cols.k[c]) swapped.block(j * L, c, L, 1) = prior.col(c);
        const std::vector<double> mse = column_mse(formation_decoder_.forward(params_, swapped), cols);
        for (nn::Index c = 0; c < N; ++c)
          if (j <= cols.k[c]) replaced_sum[c] += mse[c] / prior_samples;
      }
    }
    const int n = cfg_.n_agents;
    std::vector<double> reward(batch.size(), 0.0);
    for (nn::Index c = 0; c < N; ++c)
      reward[c / n] += (-full[c] + replaced_sum[c] / (cols.k[c] + 1)) / n;
    return reward;
  }

  static nn::Mat<S> standard_normal(nn::Index rows, nn::Index cols, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    nn::Mat<S> m(rows, cols);
    for (nn::Index c = 0; c < cols; ++c)
      for (nn::Index r = 0; r < rows; ++r) m(r, c) = static_cast<S>(normal(rng));
    return m;
  }

  nn::Index batch_columns(const std::vector<FormationSample<S>>& batch) const {
    return static_cast<nn::Index>(batch.size()) * cfg_.n_agents;
  }

 private:
  struct Columns {
    nn::Mat<S> summaries;                // D x N
    nn::Mat<S> targets;                  // 2K x N
    std::vector<int> k;                  // index-set size per column
    std::vector<std::vector<int>> slot;  // column index feeding each valid slot
  };

  void ensure_optimizer() {
    if (!optimizer_ready_) {
      typename nn::Optimizer<S>::Options o;
      o.kind = nn::OptimizerKind::adam;
      o.lr = 1e-3;
      set_optimizer(o);
    }
  }

  Columns gather(const std::vector<FormationSample<S>>& batch) const {
    const int n = cfg_.n_agents, K = cfg_.slots;
    const nn::Index N = batch_columns(batch);
    Columns c;
    c.summaries.resize(cfg_.summary_dim, N);
    c.targets.resize(2 * K, N);
    c.k.resize(N);
    c.slot.resize(N);
    for (std::size_t s = 0; s < batch.size(); ++s) {
      const auto& b = batch[s];
      if (b.summaries.rows() != cfg_.summary_dim || b.summaries.cols() != n)
        throw ConfigError("fnet: summary block must be summary_dim x n");
      if (b.targets.rows() != 2 * K || b.targets.cols() != n) throw ConfigError("fnet: target block must be 2K x n");
      if (static_cast<int>(b.members.size()) != n) throw ConfigError("fnet: one index set per agent required");
      for (int i = 0; i < n; ++i) {
        const nn::Index col = static_cast<nn::Index>(s) * n + i;
        c.summaries.col(col) = b.summaries.col(i);
        c.targets.col(col) = b.targets.col(i);
        const auto& m = b.members[i];
        if (m.empty() || static_cast<int>(m.size()) > K) throw ConfigError("fnet: index-set size out of range");
        c.k[col] = static_cast<int>(m.size());
        c.slot[col].push_back(static_cast<int>(col));
        for (int j : m) {
          if (j < 0 || j >= n || j == i) throw ConfigError("fnet: invalid index-set member");
          c.slot[col].push_back(static_cast<int>(static_cast<nn::Index>(s) * n + j));
        }
      }
    }
    return c;
  }

  std::pair<nn::Mat<S>, nn::Mat<S>> encode_with(const nn::ParameterVector<S>& p, const nn::Mat<S>& x,
                                                typename nn::Mlp<S>::Record* rec) const {
    const nn::Mat<S> out = encoder_.forward(p, x, rec);
    const nn::Index L = cfg_.latent_dim;
    nn::Mat<S> log_std = out.bottomRows(L).cwiseMax(static_cast<S>(cfg_.log_std_min))
                             .cwiseMin(static_cast<S>(cfg_.log_std_max));
    return {out.topRows(L), std::move(log_std)};
  }

  nn::Mat<S> decoder_input(const nn::Mat<S>& z, const Columns& cols) const {
    const nn::Index L = cfg_.latent_dim, N = z.cols();
    nn::Mat<S> in = nn::Mat<S>::Zero((cfg_.slots + 1) * L, N);
    for (nn::Index c = 0; c < N; ++c)
      for (std::size_t s = 0; s < cols.slot[c].size(); ++s) in.block(s * L, c, L, 1) = z.col(cols.slot[c][s]);
    return in;
  }

  // Mean squared error per column over the 2k valid target rows.
  std::vector<double> column_mse(const nn::Mat<S>& pred, const Columns& cols) const {
    std::vector<double> mse(pred.cols());
    for (nn::Index c = 0; c < pred.cols(); ++c) {
      const nn::Index rows = 2 * cols.k[c];
      mse[c] = static_cast<double>((pred.col(c).head(rows) - cols.targets.col(c).head(rows)).squaredNorm()) / rows;
    }
    return mse;
  }

  Gradient evaluate(const nn::ParameterVector<S>& p, const std::vector<FormationSample<S>>& batch,
                    const nn::Mat<S>& noise, const LossWeights& w, bool need_grad) const {
    if (batch.empty()) throw ConfigError("fnet: empty batch");
    const Columns cols = gather(batch);
    const nn::Index N = cols.summaries.cols(), L = cfg_.latent_dim, D = cfg_.summary_dim;
    if (noise.rows() != L || noise.cols() != N) throw ConfigError("fnet: noise shape mismatch");

    typename nn::Mlp<S>::Record enc_rec, dec_f_rec, dec_g_rec;
    const nn::Mat<S> enc_out = encoder_.forward(p, cols.summaries, &enc_rec);
    const nn::Mat<S> mean = enc_out.topRows(L);
    const nn::Mat<S> raw_log_std = enc_out.bottomRows(L);
    const nn::Mat<S> log_std =
        raw_log_std.cwiseMax(static_cast<S>(cfg_.log_std_min)).cwiseMin(static_cast<S>(cfg_.log_std_max));
    const nn::Mat<S> sigma = log_std.array().exp().matrix();
    const nn::Mat<S> z = mean + (sigma.array() * noise.array()).matrix();

    const nn::Mat<S> in_f = decoder_input(z, cols);
    const nn::Mat<S> pred_f = formation_decoder_.forward(p, in_f, &dec_f_rec);
    const nn::Mat<S> pred_g = trajectory_decoder_.forward(p, z, &dec_g_rec);

    Gradient out;
    const std::vector<double> mse_f = column_mse(pred_f, cols);
    double lf = 0.0, lkl = 0.0;
    for (nn::Index c = 0; c < N; ++c) {
      lf += mse_f[c];
      lkl += gaussian_kl(mean.col(c), log_std.col(c));
    }
    out.losses.formation = lf / N;
    out.losses.kl = lkl / N;
    out.losses.trajectory = static_cast<double>((pred_g - cols.summaries).squaredNorm()) / static_cast<double>(D * N);
    if (!need_grad) return out;

    out.grad = p.zeros_like();
    nn::Mat<S> dpred_f = nn::Mat<S>::Zero(pred_f.rows(), N);
    for (nn::Index c = 0; c < N; ++c) {
      const nn::Index rows = 2 * cols.k[c];
      dpred_f.col(c).head(rows) =
          (pred_f.col(c).head(rows) - cols.targets.col(c).head(rows)) * static_cast<S>(2.0 * w.f / (rows * N));
    }
    const nn::Mat<S> din_f = formation_decoder_.backward(p, dec_f_rec, dpred_f, out.grad);
    nn::Mat<S> dz = nn::Mat<S>::Zero(L, N);
    for (nn::Index c = 0; c < N; ++c)
      for (std::size_t s = 0; s < cols.slot[c].size(); ++s) dz.col(cols.slot[c][s]) += din_f.block(s * L, c, L, 1);

    nn::ParameterVector<S> grad_g = p.zeros_like();
    const nn::Mat<S> dpred_g = (pred_g - cols.summaries) * static_cast<S>(2.0 / static_cast<double>(D * N));
    const nn::Mat<S> dz_g = trajectory_decoder_.backward(p, dec_g_rec, dpred_g, grad_g);
    out.grad.mutable_values() += static_cast<S>(w.g) * grad_g.values();
    dz += static_cast<S>(w.encoder_g) * dz_g;

    const S kl_scale = static_cast<S>(w.kl / N);
    nn::Mat<S> denc(2 * L, N);
    denc.topRows(L) = dz + kl_scale * mean;
    nn::Mat<S> dlog_std = (dz.array() * noise.array() * sigma.array()).matrix() +
                          kl_scale * (sigma.array().square() - S(1)).matrix();
    const auto inside = (raw_log_std.array() >= static_cast<S>(cfg_.log_std_min)) &&
                        (raw_log_std.array() <= static_cast<S>(cfg_.log_std_max));
    denc.bottomRows(L) = inside.select(dlog_std, S(0));
    encoder_.backward(p, enc_rec, denc, out.grad, false);
    return out;
  }

  FNetConfig cfg_;
  nn::Mlp<S> encoder_;
  nn::Mlp<S> formation_decoder_;
  nn::Mlp<S> trajectory_decoder_;
  nn::ParameterVector<S> params_;
  nn::Optimizer<S> optimizer_;
  bool optimizer_ready_ = false;
};

// ---------------------------------------------------------------------------
// Exhaustive check of the mutual-information lower bound on a discrete model.

struct ElboResult {
  double exact_mi = 0.0;
  double elbo = 0.0;
};

/// joint(f, z) is p(F', z | context); posterior(f, z) is q(f | z) (columns sum to 1).
/// exact_mi = sum p(f,z) log(p(f|z)/p(f)); elbo = sum p(f,z) [log q(f|z) - log p(f)].
inline ElboResult elbo_bound_oracle(const Eigen::MatrixXd& joint, const Eigen::MatrixXd& posterior,
                                    double tolerance = 1e-9) {
  if (joint.rows() != posterior.rows() || joint.cols() != posterior.cols())
    throw ConfigError("elbo oracle: joint and posterior shapes differ");
  if (joint.size() == 0 || joint.size() > 10000) throw ConfigError("elbo oracle: model must have 1..10^4 outcomes");
  if ((joint.array() < 0.0).any() || std::abs(joint.sum() - 1.0) > tolerance)
    throw ConfigError("elbo oracle: joint distribution is not normalized");
  if ((posterior.array() < 0.0).any()) throw ConfigError("elbo oracle: negative posterior entry");
  for (Eigen::Index z = 0; z < posterior.cols(); ++z)
    if (std::abs(posterior.col(z).sum() - 1.0) > tolerance)
      throw ConfigError("elbo oracle: posterior column " + std::to_string(z) + " is not normalized");

  const Eigen::VectorXd pf = joint.rowwise().sum();
  const Eigen::RowVectorXd pz = joint.colwise().sum();
  ElboResult r;
  for (Eigen::Index z = 0; z < joint.cols(); ++z) {
    for (Eigen::Index f = 0; f < joint.rows(); ++f) {
      const double p = joint(f, z);
      if (p <= 0.0) continue;
      const double p_f_given_z = p / pz(z);
      r.exact_mi += p * (std::log(p_f_given_z) - std::log(pf(f)));
      r.elbo += p * (std::log(posterior(f, z)) - std::log(pf(f)));
    }
  }
  return r;
}

}  // namespace fox
