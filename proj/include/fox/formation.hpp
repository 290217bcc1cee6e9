#pragma once

// Formation arrangement: compressed pairwise observation differences,
// SimHash angle codes, agent index sets and the round() discretization
// used to bin formations for visitation counting.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fox/common.hpp"

namespace fox {

using ObservationVector = Eigen::VectorXd;

/// Joint observation (o^0, ..., o^{n-1}); column i is agent i's observation.
struct ExplorationState {
  Eigen::MatrixXd observations;  // d x n

  ExplorationState() = default;
  explicit ExplorationState(Eigen::MatrixXd obs) : observations(std::move(obs)) {}

  int n() const { return static_cast<int>(observations.cols()); }
  int d() const { return static_cast<int>(observations.rows()); }
  auto observation(int i) const { return observations.col(i); }

  bool operator==(const ExplorationState& other) const {
    return observations.rows() == other.observations.rows() &&
           observations.cols() == other.observations.cols() && observations == other.observations;
  }
};

/// Random-projection sign hash. The projection matrix is drawn once from a
/// standard normal generator and never changes afterwards.
class SimHashProjector {
 public:
  SimHashProjector(int bits, int dim, std::uint64_t seed) : seed_(seed) {
    if (bits < 1 || bits > 30) throw ConfigError("simhash: hash length m must be in [1, 30]");
    if (dim < 1) throw ConfigError("simhash: input dimension must be positive");
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    matrix_.resize(bits, dim);
    for (int r = 0; r < bits; ++r)
      for (int c = 0; c < dim; ++c) matrix_(r, c) = normal(rng);
  }

  explicit SimHashProjector(Eigen::MatrixXd matrix) : matrix_(std::move(matrix)) {
    if (matrix_.rows() < 1 || matrix_.rows() > 30 || matrix_.cols() < 1)
      throw ConfigError("simhash: projector must have 1..30 rows and at least one column");
  }

  int bits() const { return static_cast<int>(matrix_.rows()); }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  std::uint64_t seed() const { return seed_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }

 private:
  Eigen::MatrixXd matrix_;
  std::uint64_t seed_ = 0;
};

/// sign(t) = 1 iff t >= 0. The first projector row is the most significant bit.
template <typename Derived>
std::uint32_t simhash_code(const Eigen::MatrixBase<Derived>& x, const SimHashProjector& projector) {
  if (x.size() != projector.dim())
    throw ConfigError("simhash: input length " + std::to_string(x.size()) +
                      " does not match projector dimension " + std::to_string(projector.dim()));
  std::uint32_t code = 0;
  const auto& v = projector.matrix();
  for (int b = 0; b < projector.bits(); ++b) {
    const double dot = v.row(b).dot(x.derived().template cast<double>());
    code = (code << 1) | (dot >= 0.0 ? 1u : 0u);
  }
  return code;
}

struct CompressedDifference {
  double distance = 0.0;
  std::uint32_t angle_code = 0;

  bool operator==(const CompressedDifference&) const = default;
};

/// D^{ij}: distance of o^i - o^j and the hash of its direction. A zero
/// difference is hashed unnormalized, which sets every bit.
template <typename A, typename B>
CompressedDifference compress_difference(const Eigen::MatrixBase<A>& oi, const Eigen::MatrixBase<B>& oj,
                                         const SimHashProjector& projector) {
  if (oi.size() != oj.size()) throw ConfigError("compress_difference: observation lengths differ");
  const Eigen::VectorXd diff = oi.template cast<double>() - oj.template cast<double>();
  const double dist = diff.norm();
  CompressedDifference out;
  out.distance = dist;
  out.angle_code = dist > 0.0 ? simhash_code(diff / dist, projector) : simhash_code(diff, projector);
  return out;
}

enum class IndexStrategy { max, min, maxmin, all };

inline std::string_view to_string(IndexStrategy s) {
  switch (s) {
    case IndexStrategy::max: return "max";
    case IndexStrategy::min: return "min";
    case IndexStrategy::maxmin: return "maxmin";
    case IndexStrategy::all: return "all";
  }
  return "?";
}

inline IndexStrategy parse_index_strategy(std::string_view s) {
  if (s == "max") return IndexStrategy::max;
  if (s == "min") return IndexStrategy::min;
  if (s == "maxmin") return IndexStrategy::maxmin;
  if (s == "all") return IndexStrategy::all;
  throw ConfigError("unknown index-set strategy '" + std::string(s) + "'");
}

/// Largest index set a strategy can produce for n agents.
inline int max_index_set_size(IndexStrategy s, int n) {
  if (n < 2) return 0;
  switch (s) {
    case IndexStrategy::max:
    case IndexStrategy::min: return 1;
    case IndexStrategy::maxmin: return n >= 3 ? 2 : 1;
    case IndexStrategy::all: return n - 1;
  }
  return 0;
}

struct IndexSet {
  std::vector<int> members;
  IndexStrategy strategy = IndexStrategy::all;

  int size() const { return static_cast<int>(members.size()); }
  bool operator==(const IndexSet&) const = default;
};

/// F^i for agent i. Distances are ||o^i - o^j||_2; ties go to the smallest index.
inline IndexSet select_index_set(const ExplorationState& s, int i, IndexStrategy strategy) {
  const int n = s.n();
  if (n < 2) throw ConfigError("select_index_set: need at least two agents");
  if (i < 0 || i >= n) throw ConfigError("select_index_set: agent index out of range");
  IndexSet out;
  out.strategy = strategy;
  if (strategy == IndexStrategy::all) {
    for (int j = 0; j < n; ++j)
      if (j != i) out.members.push_back(j);
    return out;
  }
  int arg_max = -1, arg_min = -1;
  double best_max = -1.0, best_min = std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (j == i) continue;
    const double dist = (s.observation(i) - s.observation(j)).norm();
    if (dist > best_max) best_max = dist, arg_max = j;
    if (dist < best_min) best_min = dist, arg_min = j;
  }
  switch (strategy) {
    case IndexStrategy::max: out.members = {arg_max}; break;
    case IndexStrategy::min: out.members = {arg_min}; break;
    case IndexStrategy::maxmin:
      out.members = {arg_max};
      if (arg_min != arg_max) out.members.push_back(arg_min);
      break;
    case IndexStrategy::all: break;
  }
  return out;
}

inline std::vector<IndexSet> select_index_sets(const ExplorationState& s, IndexStrategy strategy) {
  std::vector<IndexSet> sets;
  sets.reserve(s.n());
  for (int i = 0; i < s.n(); ++i) sets.push_back(select_index_set(s, i, strategy));
  return sets;
}

struct Formation {
  std::vector<std::vector<CompressedDifference>> per_agent;

  bool operator==(const Formation&) const = default;
};

/// Formation of a state under explicitly supplied index sets.
inline Formation arrange_formation(const ExplorationState& s, const std::vector<IndexSet>& index_sets,
                                   const SimHashProjector& projector) {
  if (static_cast<int>(index_sets.size()) != s.n())
    throw ConfigError("arrange_formation: one index set per agent required");
  if (s.d() != projector.dim()) throw ConfigError("arrange_formation: projector dimension mismatch");
  Formation f;
  f.per_agent.resize(s.n());
  for (int i = 0; i < s.n(); ++i) {
    for (int j : index_sets[i].members) {
      if (j < 0 || j >= s.n() || j == i) throw ConfigError("arrange_formation: invalid index-set member");
      f.per_agent[i].push_back(compress_difference(s.observation(i), s.observation(j), projector));
    }
  }
  return f;
}

inline Formation arrange_formation(const ExplorationState& s, IndexStrategy strategy,
                                   const SimHashProjector& projector) {
  return arrange_formation(s, select_index_sets(s, strategy), projector);
}

inline bool formations_equivalent(const ExplorationState& s1, const ExplorationState& s2, IndexStrategy strategy,
                                  const SimHashProjector& projector) {
  if (s1.n() != s2.n() || s1.d() != s2.d())
    throw ConfigError("formations_equivalent: states have different shapes");
  return arrange_formation(s1, strategy, projector) == arrange_formation(s2, strategy, projector);
}

// round() to l decimal places, as floor(x*10^l) [+1 when the remainder is >= 0.5] times 10^-l.
inline double discretize(double x, int l) {
  const double scaled = x * std::pow(10.0, l);
  const double lower = std::floor(scaled);
  const double units = (scaled - lower < 0.5) ? lower : lower + 1.0;
  return units * std::pow(10.0, -l);
}

inline std::vector<double> discretize(const std::vector<double>& x, int l) {
  std::vector<double> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = discretize(x[k], l);
  return out;
}

/// Integer bin index of discretize(x, l), i.e. the value in units of 10^-l.
inline std::int64_t discretize_units(double x, int l) {
  const double scaled = x * std::pow(10.0, l);
  const double lower = std::floor(scaled);
  return static_cast<std::int64_t>((scaled - lower < 0.5) ? lower : lower + 1.0);
}

/// Fixed-point decimal text of units * 10^-l, e.g. (-3, 1) -> "-0.3".
inline std::string fixed_point(std::int64_t units, int l) {
  const bool negative = units < 0;
  std::string digits = std::to_string(negative ? -units : units);
  if (l > 0) {
    if (static_cast<int>(digits.size()) <= l) digits.insert(0, l + 1 - digits.size(), '0');
    digits.insert(digits.size() - l, ".");
  }
  return negative ? "-" + digits : digits;
}

/// Canonical counting key: per agent, entries "distance,code" joined by '|';
/// agents separated by "||".
inline std::string formation_key(const Formation& f, int l) {
  std::string key;
  for (std::size_t i = 0; i < f.per_agent.size(); ++i) {
    if (i > 0) key += "||";
    for (std::size_t k = 0; k < f.per_agent[i].size(); ++k) {
      if (k > 0) key += '|';
      key += fixed_point(discretize_units(f.per_agent[i][k].distance, l), l);
      key += ',';
      key += std::to_string(f.per_agent[i][k].angle_code);
    }
  }
  return key;
}

/// Key of an arbitrary real vector after discretization (observation targets).
template <typename Derived>
std::string vector_key(const Eigen::MatrixBase<Derived>& x, int l) {
  std::string key;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    if (k > 0) key += '|';
    key += fixed_point(discretize_units(static_cast<double>(x(k)), l), l);
  }
  return key;
}

}  // namespace fox
