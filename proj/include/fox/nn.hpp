#pragma once

// Small differentiable building blocks: a flat parameter vector with a named
// layout, dense layers, a GRU cell, optimizers and a central-difference
// gradient checker. Columns are samples throughout (X is features x batch).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fox/common.hpp"

namespace fox::nn {

using Index = Eigen::Index;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

struct TensorSlice {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;

  Index size() const { return rows * cols; }
  bool operator==(const TensorSlice&) const = default;
};

/// Maps named tensors onto contiguous, non-overlapping slices of a flat vector.
class Layout {
 public:
  std::size_t add(std::string name, Index rows, Index cols = 1) {
    if (rows < 0 || cols < 0) throw ConfigError("layout: negative tensor shape for " + name);
    if (find(name)) throw ConfigError("layout: duplicate tensor name " + name);
    slices_.push_back({std::move(name), size_, rows, cols});
    size_ += rows * cols;
    return slices_.size() - 1;
  }

  const std::vector<TensorSlice>& slices() const { return slices_; }
  const TensorSlice& slice(std::size_t id) const { return slices_.at(id); }
  Index size() const { return size_; }

  std::optional<std::size_t> find(std::string_view name) const {
    for (std::size_t k = 0; k < slices_.size(); ++k)
      if (slices_[k].name == name) return k;
    return std::nullopt;
  }

  /// Slices whose name starts with prefix.
  std::vector<std::size_t> with_prefix(std::string_view prefix) const {
    std::vector<std::size_t> ids;
    for (std::size_t k = 0; k < slices_.size(); ++k)
      if (std::string_view(slices_[k].name).substr(0, prefix.size()) == prefix) ids.push_back(k);
    return ids;
  }

  bool operator==(const Layout&) const = default;

 private:
  std::vector<TensorSlice> slices_;
  Index size_ = 0;
};

namespace detail {
inline std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

/// Flat parameters (or gradients) plus the layout that names their slices.
/// Every mutable access re-stamps the vector so stale activation records can
/// be detected.
template <typename S>
class ParameterVector {
 public:
  ParameterVector() = default;
  explicit ParameterVector(std::shared_ptr<const Layout> layout)
      : layout_(std::move(layout)), values_(Vec<S>::Zero(layout_->size())), stamp_(detail::next_stamp()) {}

  ParameterVector(const ParameterVector& other)
      : layout_(other.layout_), values_(other.values_), stamp_(detail::next_stamp()) {}
  ParameterVector& operator=(const ParameterVector& other) {
    layout_ = other.layout_;
    values_ = other.values_;
    stamp_ = detail::next_stamp();
    return *this;
  }
  ParameterVector(ParameterVector&&) noexcept = default;
  ParameterVector& operator=(ParameterVector&&) noexcept = default;

  const Layout& layout() const { return *layout_; }
  const std::shared_ptr<const Layout>& layout_ptr() const { return layout_; }
  Index size() const { return values_.size(); }
  std::uint64_t stamp() const { return stamp_; }

  const Vec<S>& values() const { return values_; }
  Vec<S>& mutable_values() {
    stamp_ = detail::next_stamp();
    return values_;
  }

  Eigen::Map<const Mat<S>> tensor(std::size_t id) const {
    const auto& s = layout_->slice(id);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<Mat<S>> mutable_tensor(std::size_t id) {
    stamp_ = detail::next_stamp();
    const auto& s = layout_->slice(id);
    return {values_.data() + s.offset, s.rows, s.cols};
  }
  Eigen::Map<const Vec<S>> segment(std::size_t id) const {
    const auto& s = layout_->slice(id);
    return {values_.data() + s.offset, s.size()};
  }
  Eigen::Map<Vec<S>> mutable_segment(std::size_t id) {
    stamp_ = detail::next_stamp();
    const auto& s = layout_->slice(id);
    return {values_.data() + s.offset, s.size()};
  }

  ParameterVector zeros_like() const { return ParameterVector(layout_); }

  template <typename T>
  ParameterVector<T> cast() const {
    ParameterVector<T> out(layout_);
    out.mutable_values() = values_.template cast<T>();
    return out;
  }

  bool all_finite() const { return values_.allFinite(); }

 private:
  std::shared_ptr<const Layout> layout_ = std::make_shared<Layout>();
  Vec<S> values_;
  std::uint64_t stamp_ = 0;
};

// ---------------------------------------------------------------------------
// Activations

enum class Activation { identity, relu, tanh, sigmoid, elu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
    case Activation::elu: return "elu";
  }
  return "?";
}

template <typename S>
S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}

template <typename S>
Mat<S> activate(Activation a, const Mat<S>& pre) {
  switch (a) {
    case Activation::identity: return pre;
    case Activation::relu: return pre.cwiseMax(S(0));
    case Activation::tanh: return pre.array().tanh().matrix();
    case Activation::sigmoid: return pre.unaryExpr([](S v) { return sigmoid(v); });
    case Activation::elu: return pre.unaryExpr([](S v) { return v > S(0) ? v : std::expm1(v); });
  }
  return pre;
}

/// dL/dpre given dL/dpost, the pre-activation and the post-activation.
template <typename S>
Mat<S> activation_backward(Activation a, const Mat<S>& pre, const Mat<S>& post, const Mat<S>& dpost) {
  switch (a) {
    case Activation::identity: return dpost;
    case Activation::relu: return (pre.array() > S(0)).select(dpost, S(0));
    case Activation::tanh: return (dpost.array() * (S(1) - post.array().square())).matrix();
    case Activation::sigmoid: return (dpost.array() * post.array() * (S(1) - post.array())).matrix();
    case Activation::elu: return (pre.array() > S(0)).select(dpost, dpost.array() * (post.array() + S(1)));
  }
  return dpost;
}

// ---------------------------------------------------------------------------
// Layers

/// y = W x + b.
template <typename S>
class Linear {
 public:
  Linear() = default;
  Linear(Layout& layout, const std::string& prefix, Index in, Index out)
      : in_(in), out_(out), w_(layout.add(prefix + ".weight", out, in)), b_(layout.add(prefix + ".bias", out, 1)) {}

  Index in() const { return in_; }
  Index out() const { return out_; }
  std::size_t weight_id() const { return w_; }
  std::size_t bias_id() const { return b_; }

  void init(ParameterVector<S>& p, Rng& rng) const {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(in_, 1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    auto w = p.mutable_tensor(w_);
    for (Index k = 0; k < w.size(); ++k) w.data()[k] = static_cast<S>(u(rng));
    auto b = p.mutable_tensor(b_);
    for (Index k = 0; k < b.size(); ++k) b.data()[k] = static_cast<S>(u(rng));
  }

  Mat<S> forward(const ParameterVector<S>& p, const Mat<S>& x) const {
    if (x.rows() != in_)
      throw ConfigError("linear: expected " + std::to_string(in_) + " input rows, got " + std::to_string(x.rows()));
    Mat<S> y = p.tensor(w_) * x;
    y.colwise() += p.segment(b_);
    return y;
  }

  /// Accumulates parameter gradients into grad and returns dL/dx.
  Mat<S> backward(const ParameterVector<S>& p, const Mat<S>& x, const Mat<S>& dy, ParameterVector<S>& grad,
                  bool need_input_grad = true) const {
    grad.mutable_tensor(w_).noalias() += dy * x.transpose();
    grad.mutable_segment(b_) += dy.rowwise().sum();
    if (!need_input_grad) return {};
    return p.tensor(w_).transpose() * dy;
  }

 private:
  Index in_ = 0, out_ = 0;
  std::size_t w_ = 0, b_ = 0;
};

/// Stack of Linear layers, each followed by its activation.
template <typename S>
class Mlp {
 public:
  struct Record {
    std::vector<Mat<S>> inputs;  // input to each layer
    std::vector<Mat<S>> pre;     // pre-activation of each layer
    Mat<S> output;
  };

  Mlp() = default;
  Mlp(Layout& layout, const std::string& prefix, Index in, const std::vector<Index>& sizes,
      const std::vector<Activation>& activations)
      : activations_(activations) {
    if (sizes.size() != activations.size()) throw ConfigError("mlp: one activation per layer required");
    Index prev = in;
    for (std::size_t k = 0; k < sizes.size(); ++k) {
      layers_.emplace_back(layout, prefix + "." + std::to_string(k), prev, sizes[k]);
      prev = sizes[k];
    }
  }

  Index in() const { return layers_.empty() ? 0 : layers_.front().in(); }
  Index out() const { return layers_.empty() ? 0 : layers_.back().out(); }
  const std::vector<Linear<S>>& layers() const { return layers_; }
  const std::vector<Activation>& activations() const { return activations_; }

  void init(ParameterVector<S>& p, Rng& rng) const {
    for (const auto& l : layers_) l.init(p, rng);
  }

  Mat<S> forward(const ParameterVector<S>& p, const Mat<S>& x, Record* record = nullptr) const {
    Mat<S> h = x;
    if (record) {
      record->inputs.clear();
      record->pre.clear();
    }
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      Mat<S> pre = layers_[k].forward(p, h);
      Mat<S> post = activate(activations_[k], pre);
      if (record) {
        record->inputs.push_back(std::move(h));
        record->pre.push_back(std::move(pre));
      }
      h = std::move(post);
    }
    if (record) record->output = h;
    return h;
  }

  Mat<S> backward(const ParameterVector<S>& p, const Record& record, const Mat<S>& dy, ParameterVector<S>& grad,
                  bool need_input_grad = true) const {
    Mat<S> d = dy;
    for (std::size_t k = layers_.size(); k-- > 0;) {
      const Mat<S>& post = (k + 1 < layers_.size()) ? record.inputs[k + 1] : record.output;
      d = activation_backward(activations_[k], record.pre[k], post, d);
      d = layers_[k].backward(p, record.inputs[k], d, grad, need_input_grad || k > 0);
    }
    return d;
  }

 private:
  std::vector<Linear<S>> layers_;
  std::vector<Activation> activations_;
};

/// Standard GRU cell (reset gate r, update gate z, candidate n):
///   r  = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
///   z  = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
///   n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
///   h' = (1 - z) * n + z * h
template <typename S>
class GruCell {
 public:
  struct Record {
    Mat<S> x, h, r, z, n, hn;  // hn = W_hn h + b_hn
  };

  GruCell() = default;
  GruCell(Layout& layout, const std::string& prefix, Index in, Index hidden)
      : in_(in),
        hidden_(hidden),
        w_ih_(layout.add(prefix + ".weight_ih", 3 * hidden, in)),
        w_hh_(layout.add(prefix + ".weight_hh", 3 * hidden, hidden)),
        b_ih_(layout.add(prefix + ".bias_ih", 3 * hidden, 1)),
        b_hh_(layout.add(prefix + ".bias_hh", 3 * hidden, 1)) {}

  Index in() const { return in_; }
  Index hidden() const { return hidden_; }

  void init(ParameterVector<S>& p, Rng& rng) const {
    for (std::size_t id : {w_ih_, w_hh_, b_ih_, b_hh_}) {
      const double fan_in = static_cast<double>(id == w_ih_ ? in_ : hidden_);
      const double bound = 1.0 / std::sqrt(std::max(fan_in, 1.0));
      std::uniform_real_distribution<double> u(-bound, bound);
      auto t = p.mutable_tensor(id);
      for (Index k = 0; k < t.size(); ++k) t.data()[k] = static_cast<S>(u(rng));
    }
  }

  Mat<S> forward(const ParameterVector<S>& p, const Mat<S>& x, const Mat<S>& h, Record* record = nullptr) const {
    if (x.rows() != in_ || h.rows() != hidden_ || x.cols() != h.cols())
      throw ConfigError("gru: input/hidden shape mismatch");
    const Index H = hidden_;
    Mat<S> gi = p.tensor(w_ih_) * x;
    gi.colwise() += p.segment(b_ih_);
    Mat<S> gh = p.tensor(w_hh_) * h;
    gh.colwise() += p.segment(b_hh_);
    Mat<S> r = (gi.topRows(H) + gh.topRows(H)).unaryExpr([](S v) { return sigmoid(v); });
    Mat<S> z = (gi.middleRows(H, H) + gh.middleRows(H, H)).unaryExpr([](S v) { return sigmoid(v); });
    Mat<S> hn = gh.bottomRows(H);
    Mat<S> n = (gi.bottomRows(H).array() + r.array() * hn.array()).tanh().matrix();
    Mat<S> out = ((S(1) - z.array()) * n.array() + z.array() * h.array()).matrix();
    if (record) *record = Record{x, h, std::move(r), std::move(z), std::move(n), std::move(hn)};
    return out;
  }

  /// Returns (dL/dx, dL/dh) and accumulates parameter gradients.
  std::pair<Mat<S>, Mat<S>> backward(const ParameterVector<S>& p, const Record& rec, const Mat<S>& dout,
                                     ParameterVector<S>& grad, bool need_input_grad = true) const {
    const Index H = hidden_;
    const auto& r = rec.r.array();
    const auto& z = rec.z.array();
    const auto& n = rec.n.array();
    Mat<S> dgi(3 * H, dout.cols());
    Mat<S> dgh(3 * H, dout.cols());
    auto dn_pre = (dout.array() * (S(1) - z) * (S(1) - n.square())).eval();
    auto dz_pre = (dout.array() * (rec.h.array() - n) * z * (S(1) - z)).eval();
    auto dr_pre = (dn_pre * rec.hn.array() * r * (S(1) - r)).eval();
    dgi.topRows(H) = dr_pre.matrix();
    dgi.middleRows(H, H) = dz_pre.matrix();
    dgi.bottomRows(H) = dn_pre.matrix();
    dgh.topRows(H) = dr_pre.matrix();
    dgh.middleRows(H, H) = dz_pre.matrix();
    dgh.bottomRows(H) = (dn_pre * r).matrix();

    grad.mutable_tensor(w_ih_).noalias() += dgi * rec.x.transpose();
    grad.mutable_tensor(w_hh_).noalias() += dgh * rec.h.transpose();
    grad.mutable_segment(b_ih_) += dgi.rowwise().sum();
    grad.mutable_segment(b_hh_) += dgh.rowwise().sum();

    Mat<S> dh = (dout.array() * z).matrix();
    dh.noalias() += p.tensor(w_hh_).transpose() * dgh;
    Mat<S> dx;
    if (need_input_grad) dx = p.tensor(w_ih_).transpose() * dgi;
    return {std::move(dx), std::move(dh)};
  }

 private:
  Index in_ = 0, hidden_ = 0;
  std::size_t w_ih_ = 0, w_hh_ = 0, b_ih_ = 0, b_hh_ = 0;
};

// ---------------------------------------------------------------------------
// Generic network: dense stack, optionally with a GRU after the first layer.

struct NetworkSpec {
  Index input_dim = 0;
  std::vector<Index> sizes;              // output width of each dense layer
  std::vector<Activation> activations;  // one per dense layer
  bool recurrent = false;                // GRU (width sizes[0]) after the first dense layer

  void validate() const {
    if (input_dim < 1) throw ConfigError("network spec: input_dim must be positive");
    if (sizes.empty()) throw ConfigError("network spec: at least one layer required");
    if (sizes.size() != activations.size()) throw ConfigError("network spec: one activation per layer required");
    for (Index s : sizes)
      if (s < 1) throw ConfigError("network spec: layer sizes must be positive");
  }
};

template <typename S>
class Network {
 public:
  struct Record {
    std::uint64_t stamp = 0;
    typename Mlp<S>::Record head;
    typename GruCell<S>::Record gru;
    typename Mlp<S>::Record tail;
  };
  struct Result {
    Mat<S> output;
    Mat<S> hidden;  // empty unless recurrent
    Record record;
  };

  Network(Layout& layout, const std::string& prefix, NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    head_ = Mlp<S>(layout, prefix + ".fc", spec_.input_dim, {spec_.sizes[0]}, {spec_.activations[0]});
    std::vector<Index> rest(spec_.sizes.begin() + 1, spec_.sizes.end());
    std::vector<Activation> rest_act(spec_.activations.begin() + 1, spec_.activations.end());
    if (spec_.recurrent) gru_ = GruCell<S>(layout, prefix + ".gru", spec_.sizes[0], spec_.sizes[0]);
    tail_ = Mlp<S>(layout, prefix + ".out", spec_.sizes[0], rest, rest_act);
  }

  const NetworkSpec& spec() const { return spec_; }
  Index hidden_dim() const { return spec_.recurrent ? spec_.sizes[0] : 0; }

  void init(ParameterVector<S>& p, Rng& rng) const {
    head_.init(p, rng);
    if (spec_.recurrent) gru_.init(p, rng);
    tail_.init(p, rng);
  }

  Result forward(const ParameterVector<S>& p, const Mat<S>& x, const Mat<S>* hidden = nullptr) const {
    Result res;
    res.record.stamp = p.stamp();
    Mat<S> a = head_.forward(p, x, &res.record.head);
    if (spec_.recurrent) {
      Mat<S> h0 = hidden ? *hidden : Mat<S>::Zero(spec_.sizes[0], x.cols());
      a = gru_.forward(p, a, h0, &res.record.gru);
      res.hidden = a;
    }
    res.output = tail_.forward(p, a, &res.record.tail);
    return res;
  }

  /// Parameter gradient of <dout, output> (+ <dhidden, hidden> when recurrent).
  ParameterVector<S> backward(const ParameterVector<S>& p, const Record& rec, const Mat<S>& dout,
                              const Mat<S>* dhidden = nullptr) const {
    if (rec.stamp != p.stamp()) throw ContractError("network backward: activation record is stale");
    ParameterVector<S> grad = p.zeros_like();
    Mat<S> d = tail_.backward(p, rec.tail, dout, grad);
    if (spec_.recurrent) {
      if (dhidden) d += *dhidden;
      d = gru_.backward(p, rec.gru, d, grad).first;
    }
    head_.backward(p, rec.head, d, grad, false);
    return grad;
  }

 private:
  NetworkSpec spec_;
  Mlp<S> head_;
  GruCell<S> gru_;
  Mlp<S> tail_;
};

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd, rmsprop, adam };

template <typename S>
class Optimizer {
 public:
  struct Options {
    OptimizerKind kind = OptimizerKind::sgd;
    double lr = 1e-3;
    double rms_alpha = 0.99;
    double rms_eps = 1e-5;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
  };

  Optimizer() = default;
  Optimizer(Options opts, Index size) : opts_(opts), m_(Vec<S>::Zero(size)), v_(Vec<S>::Zero(size)) {}

  const Options& options() const { return opts_; }
  std::uint64_t steps() const { return t_; }

  void step(ParameterVector<S>& params, const ParameterVector<S>& grad) {
    if (grad.size() != params.size() || m_.size() != params.size())
      throw ConfigError("optimizer: gradient and parameter sizes differ");
    ++t_;
    auto& p = params.mutable_values();
    const auto& g = grad.values();
    const S lr = static_cast<S>(opts_.lr);
    // scalar loops: Eigen's packet path may fuse multiply-adds, which would make
    // a parameter's update depend on its position relative to the vector tail
    const Index n = p.size();
    switch (opts_.kind) {
      case OptimizerKind::sgd:
        for (Index k = 0; k < n; ++k) p(k) -= lr * g(k);
        break;
      case OptimizerKind::rmsprop: {
        const S a = static_cast<S>(opts_.rms_alpha), eps = static_cast<S>(opts_.rms_eps);
        for (Index k = 0; k < n; ++k) {
          v_(k) = a * v_(k) + (S(1) - a) * (g(k) * g(k));
          p(k) -= lr * g(k) / (std::sqrt(v_(k)) + eps);
        }
        break;
      }
      case OptimizerKind::adam: {
        const S b1 = static_cast<S>(opts_.beta1), b2 = static_cast<S>(opts_.beta2);
        const S c1 = S(1) - static_cast<S>(std::pow(opts_.beta1, static_cast<double>(t_)));
        const S c2 = S(1) - static_cast<S>(std::pow(opts_.beta2, static_cast<double>(t_)));
        const S eps = static_cast<S>(opts_.adam_eps);
        for (Index k = 0; k < n; ++k) {
          m_(k) = b1 * m_(k) + (S(1) - b1) * g(k);
          v_(k) = b2 * v_(k) + (S(1) - b2) * (g(k) * g(k));
          p(k) -= lr * (m_(k) / c1) / (std::sqrt(v_(k) / c2) + eps);
        }
        break;
      }
    }
  }

 private:
  Options opts_;
  Vec<S> m_, v_;
  std::uint64_t t_ = 0;
};

/// Rescales grad in place so its 2-norm is at most max_norm; returns the original norm.
template <typename S>
S clip_grad_norm(ParameterVector<S>& grad, S max_norm) {
  // sequential double sum: appending zero-gradient tensors leaves the norm bit-identical
  double sq = 0.0;
  for (Index k = 0; k < grad.size(); ++k) sq += static_cast<double>(grad.values()(k)) * grad.values()(k);
  const S norm = static_cast<S>(std::sqrt(sq));
  if (max_norm > S(0) && norm > max_norm) {
    const S scale = max_norm / norm;
    for (Index k = 0; k < grad.size(); ++k) grad.mutable_values()(k) *= scale;
  }
  return norm;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct TensorCheck {
  std::string name;
  double max_rel_error = 0.0;
  Index checked = 0;
  bool pass = true;
};

struct GradientReport {
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
  bool pass = true;

  std::string summary() const {
    std::ostringstream os;
    for (const auto& t : tensors)
      os << (t.pass ? "  ok   " : "  FAIL ") << t.name << " max_rel_err=" << t.max_rel_error << " (" << t.checked
         << " entries)\n";
    return os.str();
  }
};

/// |a - n| / max(|a|, |n|, floor): relative error with a floor for near-zero entries.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares an analytic gradient against central differences (f(p+h)-f(p-h))/2h.
/// max_entries_per_tensor > 0 checks a seeded random subset of each tensor.
template <typename LossFn>
GradientReport finite_difference_check(LossFn&& loss, const ParameterVector<double>& params,
                                       const ParameterVector<double>& analytic, double step = 1e-5,
                                       double tolerance = 1e-4, Index max_entries_per_tensor = 0,
                                       std::uint64_t seed = 0) {
  if (analytic.size() != params.size()) throw ConfigError("gradient check: gradient size mismatch");
  GradientReport report;
  ParameterVector<double> probe = params;
  Rng rng(seed);
  for (const auto& slice : params.layout().slices()) {
    TensorCheck tc;
    tc.name = slice.name;
    std::vector<Index> entries(slice.size());
    for (Index k = 0; k < slice.size(); ++k) entries[k] = slice.offset + k;
    if (max_entries_per_tensor > 0 && slice.size() > max_entries_per_tensor) {
      std::shuffle(entries.begin(), entries.end(), rng);
      entries.resize(max_entries_per_tensor);
    }
    for (Index idx : entries) {
      const double original = params.values()[idx];
      probe.mutable_values()[idx] = original + step;
      const double up = loss(probe);
      probe.mutable_values()[idx] = original - step;
      const double down = loss(probe);
      probe.mutable_values()[idx] = original;
      const double numeric = (up - down) / (2.0 * step);
      tc.max_rel_error = std::max(tc.max_rel_error, relative_error(analytic.values()[idx], numeric));
      ++tc.checked;
    }
    tc.pass = tc.max_rel_error < tolerance;
    report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
    report.pass = report.pass && tc.pass;
    report.tensors.push_back(std::move(tc));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: a text container with the layout and hex-float values.
//
//   fox-params 1
//   tensors <count>
//   <name> <offset> <rows> <cols>      (one line per tensor)
//   values <size>
//   <hexfloat>                         (one line per value)

template <typename S>
void write_checkpoint(std::ostream& os, const ParameterVector<S>& p) {
  os << "fox-params 1\n";
  os << "tensors " << p.layout().slices().size() << '\n';
  for (const auto& s : p.layout().slices()) os << s.name << ' ' << s.offset << ' ' << s.rows << ' ' << s.cols << '\n';
  os << "values " << p.size() << '\n';
  char buf[64];
  for (Index k = 0; k < p.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%a\n", static_cast<double>(p.values()[k]));
    os << buf;
  }
}

template <typename S>
ParameterVector<S> read_checkpoint(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "fox-params" || version != 1)
    throw RuntimeError("checkpoint: bad header");
  std::size_t count = 0;
  if (!(is >> tag >> count) || tag != "tensors") throw RuntimeError("checkpoint: missing tensor table");
  auto layout = std::make_shared<Layout>();
  for (std::size_t k = 0; k < count; ++k) {
    std::string name;
    Index offset = 0, rows = 0, cols = 0;
    if (!(is >> name >> offset >> rows >> cols)) throw RuntimeError("checkpoint: truncated tensor table");
    layout->add(name, rows, cols);
    if (layout->slices().back().offset != offset) throw RuntimeError("checkpoint: non-contiguous layout");
  }
  Index size = 0;
  if (!(is >> tag >> size) || tag != "values" || size != layout->size())
    throw RuntimeError("checkpoint: value count does not match layout");
  ParameterVector<S> p(layout);
  auto& v = p.mutable_values();
  for (Index k = 0; k < size; ++k) {
    std::string token;
    if (!(is >> token)) throw RuntimeError("checkpoint: truncated values");
    char* end = nullptr;
    const double value = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0') throw RuntimeError("checkpoint: malformed value '" + token + "'");
    v[k] = static_cast<S>(value);
  }
  return p;
}

}  // namespace fox::nn
