#pragma once

// Cooperative gridworld with partial observability. Agents move
// simultaneously on a width x height grid, see each other only within a
// Chebyshev sight radius, and share one sparse team reward.

#include <algorithm>
#include <cstdlib>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "fox/common.hpp"
#include "fox/formation.hpp"

namespace fox {

struct Cell {
  int x = 0;
  int y = 0;

  bool operator==(const Cell&) const = default;
  auto operator<=>(const Cell&) const = default;
};

enum class RewardMode { sparse_goal, pure_exploration };

inline std::string_view to_string(RewardMode m) {
  return m == RewardMode::sparse_goal ? "sparse_goal" : "pure_exploration";
}

inline RewardMode parse_reward_mode(std::string_view s) {
  if (s == "sparse_goal") return RewardMode::sparse_goal;
  if (s == "pure_exploration") return RewardMode::pure_exploration;
  throw ConfigError("unknown reward mode '" + std::string(s) + "'");
}

/// Actions: 0 stay, 1 up (y+1), 2 down (y-1), 3 left (x-1), 4 right (x+1).
enum Action : int { stay = 0, up = 1, down = 2, left = 3, right = 4 };
inline constexpr int kNumActions = 5;

struct GridWorldConfig {
  int width = 5;
  int height = 5;
  int n_agents = 2;
  int sight_radius = 2;
  std::vector<Cell> goal_cells;
  std::vector<Cell> spawn_cells;  // empty: seeded random distinct cells
  int episode_limit = 50;
  RewardMode reward_mode = RewardMode::sparse_goal;

  /// Every violated invariant, one message each.
  std::vector<std::string> problems() const {
    std::vector<std::string> out;
    if (width < 1 || height < 1) out.push_back("width and height must be >= 1");
    if (n_agents < 1) out.push_back("n_agents must be >= 1");
    if (static_cast<long long>(width) * height < n_agents) out.push_back("n_agents exceeds the number of cells");
    if (sight_radius < 0) out.push_back("sight_radius must be >= 0");
    if (episode_limit < 1) out.push_back("episode_limit must be >= 1");
    auto cell_name = [](const Cell& c) { return "(" + std::to_string(c.x) + "," + std::to_string(c.y) + ")"; };
    auto in_bounds = [&](const Cell& c) { return c.x >= 0 && c.x < width && c.y >= 0 && c.y < height; };
    if (reward_mode == RewardMode::sparse_goal && static_cast<int>(goal_cells.size()) != n_agents)
      out.push_back("goal_cells must list exactly n_agents cells");
    if (std::set<Cell>(goal_cells.begin(), goal_cells.end()).size() != goal_cells.size())
      out.push_back("goal_cells must be distinct");
    for (const auto& c : goal_cells)
      if (!in_bounds(c)) out.push_back("goal_cells: " + cell_name(c) + " out of bounds");
    if (!spawn_cells.empty()) {
      if (static_cast<int>(spawn_cells.size()) != n_agents) out.push_back("spawn_cells must list n_agents cells");
      if (std::set<Cell>(spawn_cells.begin(), spawn_cells.end()).size() != spawn_cells.size())
        out.push_back("spawn_cells must be distinct");
      for (const auto& c : spawn_cells)
        if (!in_bounds(c)) out.push_back("spawn_cells: " + cell_name(c) + " out of bounds");
    }
    return out;
  }

  void validate() const {
    const auto p = problems();
    if (!p.empty()) throw ConfigError("gridworld: " + p.front());
  }

  int observation_dim() const { return 2 + 3 * (n_agents - 1); }
};

struct EnvState {
  std::vector<Cell> positions;
  int t = 0;

  bool operator==(const EnvState&) const = default;
};

struct StepResult {
  EnvState state;
  Eigen::MatrixXd observations;  // d x n
  double reward = 0.0;
  bool done = false;
  bool truncated = false;  // ended by the episode limit rather than the goal
};

class GridWorld {
 public:
  explicit GridWorld(GridWorldConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const GridWorldConfig& config() const { return cfg_; }
  int n_agents() const { return cfg_.n_agents; }
  int observation_dim() const { return cfg_.observation_dim(); }
  int n_actions() const { return kNumActions; }

  std::pair<EnvState, Eigen::MatrixXd> reset(Rng& rng) const {
    EnvState s;
    if (!cfg_.spawn_cells.empty()) {
      s.positions = cfg_.spawn_cells;
    } else {
      std::vector<int> cells(static_cast<std::size_t>(cfg_.width) * cfg_.height);
      for (std::size_t k = 0; k < cells.size(); ++k) cells[k] = static_cast<int>(k);
      // partial Fisher-Yates: first n entries are a uniform sample without replacement
      for (int k = 0; k < cfg_.n_agents; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, cells.size() - 1);
        std::swap(cells[k], cells[pick(rng)]);
        s.positions.push_back({cells[k] % cfg_.width, cells[k] / cfg_.width});
      }
    }
    return {s, observe_all(s)};
  }

  std::pair<EnvState, Eigen::MatrixXd> reset(std::uint64_t seed) const {
    Rng rng(seed);
    return reset(rng);
  }

  StepResult step(const EnvState& s, const std::vector<int>& actions) const {
    const int n = cfg_.n_agents;
    if (static_cast<int>(actions.size()) != n) throw ConfigError("step: one action per agent required");
    std::vector<Cell> target(n);
    for (int i = 0; i < n; ++i) {
      if (actions[i] < 0 || actions[i] >= kNumActions)
        throw ConfigError("step: invalid action id " + std::to_string(actions[i]));
      target[i] = move(s.positions[i], actions[i]);
    }
    // Agent i may not enter a cell already claimed by a lower-indexed agent.
    // A cancelled move can leave an agent on a cell a lower-indexed agent moved
    // into; that agent's move is then cancelled too, until no cell is shared.
    std::vector<Cell> next(n);
    std::vector<bool> cancelled(n, false);
    for (bool changed = true; changed;) {
      changed = false;
      for (int i = 0; i < n; ++i) {
        next[i] = cancelled[i] ? s.positions[i] : target[i];
        for (int j = 0; j < i && !cancelled[i]; ++j)
          if (next[j] == target[i]) {
            cancelled[i] = true;
            next[i] = s.positions[i];
          }
      }
      for (int i = 0; i < n && !changed; ++i)
        for (int j = 0; j < n; ++j)
          if (i != j && next[i] == next[j]) {
            const int mover = cancelled[i] ? j : (cancelled[j] ? i : std::min(i, j));
            if (!cancelled[mover]) {
              cancelled[mover] = true;
              changed = true;
              break;
            }
          }
    }

    StepResult r;
    r.state.positions = std::move(next);
    r.state.t = s.t + 1;
    if (cfg_.reward_mode == RewardMode::sparse_goal && all_goals_occupied(r.state)) {
      r.reward = 1.0;
      r.done = true;
    }
    if (!r.done && r.state.t >= cfg_.episode_limit) {
      r.done = true;
      r.truncated = true;
    }
    r.observations = observe_all(r.state);
    return r;
  }

  /// Own position in [0,1]^2, then (visible, dx, dy) per other agent in index
  /// order; zero when the other agent is beyond the sight radius.
  Eigen::VectorXd observe(const EnvState& s, int i) const {
    Eigen::VectorXd o = Eigen::VectorXd::Zero(observation_dim());
    const double sx = std::max(cfg_.width - 1, 1), sy = std::max(cfg_.height - 1, 1);
    const Cell& me = s.positions.at(i);
    o(0) = me.x / sx;
    o(1) = me.y / sy;
    int slot = 0;
    for (int j = 0; j < cfg_.n_agents; ++j) {
      if (j == i) continue;
      const Cell& other = s.positions[j];
      const int cheb = std::max(std::abs(other.x - me.x), std::abs(other.y - me.y));
      if (cheb <= cfg_.sight_radius) {
        o(2 + 3 * slot) = 1.0;
        o(3 + 3 * slot) = (other.x - me.x) / sx;
        o(4 + 3 * slot) = (other.y - me.y) / sy;
      }
      ++slot;
    }
    return o;
  }

  Eigen::MatrixXd observe_all(const EnvState& s) const {
    Eigen::MatrixXd obs(observation_dim(), cfg_.n_agents);
    for (int i = 0; i < cfg_.n_agents; ++i) obs.col(i) = observe(s, i);
    return obs;
  }

  bool all_goals_occupied(const EnvState& s) const {
    for (const auto& g : cfg_.goal_cells)
      if (std::find(s.positions.begin(), s.positions.end(), g) == s.positions.end()) return false;
    return true;
  }

 private:
  Cell move(Cell c, int action) const {
    Cell to = c;
    switch (action) {
      case up: ++to.y; break;
      case down: --to.y; break;
      case left: --to.x; break;
      case right: ++to.x; break;
      default: break;
    }
    if (to.x < 0 || to.x >= cfg_.width || to.y < 0 || to.y >= cfg_.height) return c;
    return to;
  }

  GridWorldConfig cfg_;
};

/// Per-step trace row: t, positions, actions, reward.
inline void write_trace_header(std::ostream& os, int n) {
  os << 't';
  for (int i = 0; i < n; ++i) os << ",x" << i << ",y" << i;
  for (int i = 0; i < n; ++i) os << ",a" << i;
  os << ",reward\n";
}

inline void write_trace_row(std::ostream& os, const EnvState& s, const std::vector<int>& actions, double reward) {
  os << s.t;
  for (const auto& c : s.positions) os << ',' << c.x << ',' << c.y;
  for (int a : actions) os << ',' << a;
  os << ',' << reward << '\n';
}

}  // namespace fox
