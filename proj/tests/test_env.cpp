#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "fox/env.hpp"

using namespace fox;

namespace {

GridWorldConfig grid(int w, int h, std::vector<Cell> spawn, std::vector<Cell> goals = {}) {
  GridWorldConfig c;
  c.width = w;
  c.height = h;
  c.n_agents = static_cast<int>(spawn.size());
  c.spawn_cells = std::move(spawn);
  c.goal_cells = std::move(goals);
  if (c.goal_cells.empty()) c.reward_mode = RewardMode::pure_exploration;
  return c;
}

std::vector<Cell> after(const GridWorld& env, std::vector<Cell> from, std::vector<int> actions) {
  EnvState s{std::move(from), 0};
  return env.step(s, actions).state.positions;
}

}  // namespace

TEST(GridWorld, MovesAndWalls) {
  GridWorld env(grid(3, 3, {{0, 0}, {2, 2}}));
  EXPECT_EQ(after(env, {{1, 1}, {2, 2}}, {up, stay}), (std::vector<Cell>{{1, 2}, {2, 2}}));
  EXPECT_EQ(after(env, {{1, 1}, {2, 2}}, {down, stay}), (std::vector<Cell>{{1, 0}, {2, 2}}));
  EXPECT_EQ(after(env, {{1, 1}, {2, 2}}, {left, stay}), (std::vector<Cell>{{0, 1}, {2, 2}}));
  EXPECT_EQ(after(env, {{1, 1}, {2, 2}}, {right, stay}), (std::vector<Cell>{{2, 1}, {2, 2}}));
  EXPECT_EQ(after(env, {{0, 0}, {2, 2}}, {left, up}), (std::vector<Cell>{{0, 0}, {2, 2}}));
  EXPECT_EQ(after(env, {{0, 0}, {2, 2}}, {down, right}), (std::vector<Cell>{{0, 0}, {2, 2}}));
}

TEST(GridWorld, LowerIndexWinsContestedCell) {
  GridWorld env(grid(3, 1, {{0, 0}, {2, 0}}));
  EXPECT_EQ(after(env, {{0, 0}, {2, 0}}, {right, left}), (std::vector<Cell>{{1, 0}, {2, 0}}));
}

TEST(GridWorld, BlockedByStationaryAgent) {
  GridWorld env(grid(3, 1, {{0, 0}, {1, 0}}));
  EXPECT_EQ(after(env, {{0, 0}, {1, 0}}, {right, stay}), (std::vector<Cell>{{0, 0}, {1, 0}}));
}

TEST(GridWorld, FollowingIntoVacatedCell) {
  GridWorld env(grid(3, 2, {{2, 0}, {1, 0}}));
  EXPECT_EQ(after(env, {{2, 0}, {1, 0}}, {up, right}), (std::vector<Cell>{{2, 1}, {2, 0}}));
}

TEST(GridWorld, CancellationChains) {
  GridWorld env(grid(3, 1, {{2, 0}, {1, 0}, {0, 0}}));
  EXPECT_EQ(after(env, {{2, 0}, {1, 0}, {0, 0}}, {stay, right, right}),
            (std::vector<Cell>{{2, 0}, {1, 0}, {0, 0}}));
}

TEST(GridWorld, StepInvariantsUnderRandomPlay) {
  GridWorldConfig c;
  c.width = 4;
  c.height = 3;
  c.n_agents = 5;
  c.reward_mode = RewardMode::pure_exploration;
  GridWorld env(c);
  Rng rng(1);
  std::uniform_int_distribution<int> act(0, kNumActions - 1);
  auto [s, obs] = env.reset(rng);
  for (int t = 0; t < 2000; ++t) {
    std::vector<int> a(5);
    for (auto& x : a) x = act(rng);
    const auto r = env.step(s, a);
    std::set<Cell> occupied(r.state.positions.begin(), r.state.positions.end());
    ASSERT_EQ(occupied.size(), 5u);
    for (int i = 0; i < 5; ++i) {
      const Cell p = s.positions[i], q = r.state.positions[i];
      ASSERT_TRUE(q.x >= 0 && q.x < 4 && q.y >= 0 && q.y < 3);
      ASSERT_LE(std::abs(p.x - q.x) + std::abs(p.y - q.y), 1);
      if (a[i] == stay) ASSERT_EQ(p, q);
    }
    s = r.done ? env.reset(rng).first : r.state;
  }
}

TEST(GridWorld, ObservationLayout) {
  GridWorldConfig c = grid(5, 3, {{0, 0}, {2, 2}, {4, 0}});
  c.sight_radius = 2;
  GridWorld env(c);
  const auto [s, obs] = env.reset(1);
  ASSERT_EQ(obs.rows(), 8);
  Eigen::VectorXd expected(8);
  // agent 0 sees agent 1 at Chebyshev distance 2 (inclusive), not agent 2 at 4
  expected << 0.0, 0.0, 1.0, 0.5, 1.0, 0.0, 0.0, 0.0;
  EXPECT_TRUE(obs.col(0).isApprox(expected));
  expected << 0.5, 1.0, 1.0, -0.5, -1.0, 1.0, 0.5, -1.0;
  EXPECT_TRUE(obs.col(1).isApprox(expected));
}

TEST(GridWorld, GoalTerminates) {
  GridWorld env(grid(3, 3, {{0, 0}, {2, 2}}, {{1, 0}, {2, 2}}));
  EnvState s{{{0, 0}, {2, 2}}, 0};
  const auto r = env.step(s, {right, stay});
  EXPECT_TRUE(r.done);
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(r.reward, 1.0);
  const auto miss = env.step(s, {up, stay});
  EXPECT_FALSE(miss.done);
  EXPECT_EQ(miss.reward, 0.0);
}

TEST(GridWorld, EpisodeLimitTruncates) {
  GridWorldConfig c = grid(3, 3, {{0, 0}, {2, 2}});
  c.episode_limit = 3;
  GridWorld env(c);
  auto [s, obs] = env.reset(0);
  for (int t = 1; t <= 3; ++t) {
    const auto r = env.step(s, {stay, stay});
    EXPECT_EQ(r.done, t == 3);
    EXPECT_EQ(r.truncated, t == 3);
    EXPECT_EQ(r.reward, 0.0);
    s = r.state;
  }
}

TEST(GridWorld, SeededResetIsDistinctAndReproducible) {
  GridWorldConfig c;
  c.width = 3;
  c.height = 3;
  c.n_agents = 4;
  c.reward_mode = RewardMode::pure_exploration;
  GridWorld env(c);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = env.reset(seed).first, b = env.reset(seed).first;
    EXPECT_EQ(a, b);
    EXPECT_EQ(std::set<Cell>(a.positions.begin(), a.positions.end()).size(), 4u);
  }
}

TEST(GridWorld, InvalidInputs) {
  GridWorld env(grid(3, 3, {{0, 0}, {2, 2}}));
  EnvState s{{{0, 0}, {2, 2}}, 0};
  EXPECT_THROW(env.step(s, {0}), ConfigError);
  EXPECT_THROW(env.step(s, {0, 7}), ConfigError);
}

TEST(GridWorldConfig, ProblemsNameTheField) {
  GridWorldConfig c;
  c.width = 0;
  c.goal_cells = {{9, 9}, {9, 9}};
  const auto p = c.problems();
  auto has = [&](const std::string& s) {
    for (const auto& m : p)
      if (m.find(s) != std::string::npos) return true;
    return false;
  };
  EXPECT_TRUE(has("width"));
  EXPECT_TRUE(has("goal_cells must be distinct"));
  EXPECT_TRUE(has("goal_cells: (9,9) out of bounds"));
  EXPECT_THROW(GridWorld{c}, ConfigError);
}

TEST(Trace, RowFormat) {
  std::ostringstream os;
  write_trace_header(os, 2);
  write_trace_row(os, EnvState{{{1, 2}, {3, 4}}, 7}, {0, 4}, 1.0);
  EXPECT_EQ(os.str(), "t,x0,y0,x1,y1,a0,a1,reward\n7,1,2,3,4,0,4,1\n");
}

TEST(GridWorld, ObservationLocality) {
  GridWorldConfig c;
  c.width = 9;
  c.height = 9;
  c.n_agents = 3;
  c.sight_radius = 2;
  c.reward_mode = RewardMode::pure_exploration;
  GridWorld env(c);
  Rng rng(5);
  std::uniform_int_distribution<int> coord(0, 8);
  for (int trial = 0; trial < 500; ++trial) {
    EnvState s = env.reset(rng).first;
    const Cell me = s.positions[0];
    EnvState moved = s;
    const Cell to{coord(rng), coord(rng)};
    if (to == s.positions[1] || to == me) continue;
    moved.positions[2] = to;
    const auto cheb = [&](Cell p) { return std::max(std::abs(p.x - me.x), std::abs(p.y - me.y)); };
    if (cheb(s.positions[2]) > 2 && cheb(to) > 2) EXPECT_EQ(env.observe(s, 0), env.observe(moved, 0));
  }
}

TEST(GridWorld, WideSightSeesEveryone) {
  GridWorldConfig c = grid(4, 4, {{0, 0}, {3, 3}, {0, 3}});
  c.sight_radius = 3;
  GridWorld env(c);
  const auto obs = env.reset(0).second;
  for (int i = 0; i < 3; ++i)
    for (int s = 0; s < 2; ++s) EXPECT_EQ(obs(2 + 3 * s, i), 1.0);
}
