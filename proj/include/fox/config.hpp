#pragma once

// Run configuration: environment and training settings loaded from a
// key = value text file, with overrides applied on top. Every problem found
// (unknown key, malformed value, violated invariant) is reported at once.

#include <algorithm>
#include <charconv>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "fox/common.hpp"
#include "fox/env.hpp"
#include "fox/trainer.hpp"

namespace fox {

struct RunConfiguration {
  GridWorldConfig env;
  TrainConfig train;
};

class ValidationError : public ConfigError {
 public:
  explicit ValidationError(std::vector<std::string> problems)
      : ConfigError(join(problems)), problems_(std::move(problems)) {}
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  static std::string join(const std::vector<std::string>& p) {
    std::string s;
    for (const auto& x : p) s += (s.empty() ? "" : "\n") + x;
    return s;
  }
  std::vector<std::string> problems_;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
    throw ConfigError(key + ": cannot parse '" + v + "' as a number");
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

/// "x,y;x,y;..." (empty string for none).
inline std::vector<Cell> parse_cells(const std::string& key, const std::string& v) {
  std::vector<Cell> cells;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ';')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto comma = item.find(',');
    if (comma == std::string::npos) throw ConfigError(key + ": cell '" + item + "' is not of the form x,y");
    cells.push_back({parse_number<int>(key, trim(item.substr(0, comma))), parse_number<int>(key, trim(item.substr(comma + 1)))});
  }
  return cells;
}

inline std::string format_cells(const std::vector<Cell>& cells) {
  std::string s;
  for (const auto& c : cells) s += (s.empty() ? "" : ";") + std::to_string(c.x) + "," + std::to_string(c.y);
  return s;
}

inline std::string format_double(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline std::string_view optimizer_name(nn::OptimizerKind k) {
  switch (k) {
    case nn::OptimizerKind::sgd: return "sgd";
    case nn::OptimizerKind::rmsprop: return "rmsprop";
    case nn::OptimizerKind::adam: return "adam";
  }
  return "?";
}

inline nn::OptimizerKind parse_optimizer(const std::string& key, const std::string& v) {
  if (v == "sgd") return nn::OptimizerKind::sgd;
  if (v == "rmsprop") return nn::OptimizerKind::rmsprop;
  if (v == "adam") return nn::OptimizerKind::adam;
  throw ConfigError(key + ": unknown optimizer '" + v + "'");
}

template <typename Parse>
auto parse_enum(const std::string& key, const std::string& v, Parse parse) {
  try {
    return parse(v);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

}  // namespace config_detail

struct ConfigField {
  std::string key;
  std::string help;
  std::function<void(RunConfiguration&, const std::string&)> set;
  std::function<std::string(const RunConfiguration&)> get;
};

/// All recognised keys, in dump order.
inline const std::vector<ConfigField>& config_fields() {
  using namespace config_detail;
  using RC = RunConfiguration;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto num = [&f](std::string key, std::string help, auto ref) {
      using T = std::remove_reference_t<decltype(ref(std::declval<RC&>()))>;
      f.push_back({key, std::move(help),
                   [key, ref](RC& c, const std::string& v) { ref(c) = parse_number<T>(key, v); },
                   [ref](const RC& c) {
                     const T x = ref(const_cast<RC&>(c));
                     if constexpr (std::is_floating_point_v<T>) return format_double(x);
                     else return std::to_string(x);
                   }});
    };
    auto flag = [&f](std::string key, std::string help, auto ref) {
      f.push_back({key, std::move(help), [key, ref](RC& c, const std::string& v) { ref(c) = parse_bool(key, v); },
                   [ref](const RC& c) { return std::string(ref(const_cast<RC&>(c)) ? "true" : "false"); }});
    };
    auto cells = [&f](std::string key, std::string help, auto ref) {
      f.push_back({key, std::move(help), [key, ref](RC& c, const std::string& v) { ref(c) = parse_cells(key, v); },
                   [ref](const RC& c) { return format_cells(ref(const_cast<RC&>(c))); }});
    };
    auto choice = [&f](std::string key, std::string help, auto ref, auto parse, auto name) {
      f.push_back({key, std::move(help),
                   [key, ref, parse](RC& c, const std::string& v) { ref(c) = parse_enum(key, v, parse); },
                   [ref, name](const RC& c) { return std::string(name(ref(const_cast<RC&>(c)))); }});
    };

    num("width", "grid width", [](RC& c) -> int& { return c.env.width; });
    num("height", "grid height", [](RC& c) -> int& { return c.env.height; });
    num("n_agents", "number of agents", [](RC& c) -> int& { return c.env.n_agents; });
    num("sight_radius", "Chebyshev sight radius", [](RC& c) -> int& { return c.env.sight_radius; });
    cells("goal_cells", "goal cells x,y;x,y", [](RC& c) -> std::vector<Cell>& { return c.env.goal_cells; });
    cells("spawn_cells", "fixed spawn cells (empty: random)", [](RC& c) -> std::vector<Cell>& { return c.env.spawn_cells; });
    num("episode_limit", "episode length limit T", [](RC& c) -> int& { return c.env.episode_limit; });
    choice("reward_mode", "sparse_goal | pure_exploration", [](RC& c) -> RewardMode& { return c.env.reward_mode; },
           [](const std::string& v) { return parse_reward_mode(v); }, [](RewardMode m) { return to_string(m); });

    num("seed", "master seed", [](RC& c) -> std::uint64_t& { return c.train.seed; });
    num("total_steps", "environment steps", [](RC& c) -> long long& { return c.train.total_steps; });
    num("beta1", "weight of r_exp", [](RC& c) -> double& { return c.train.beta1; });
    num("beta2", "weight of r_aware", [](RC& c) -> double& { return c.train.beta2; });
    num("l", "rounding digits", [](RC& c) -> int& { return c.train.round_digits; });
    num("m", "SimHash bits", [](RC& c) -> int& { return c.train.hash_bits; });
    num("hash_seed", "SimHash projection seed", [](RC& c) -> std::uint64_t& { return c.train.hash_seed; });
    num("lambda_gf", "gradient-flip weight", [](RC& c) -> double& { return c.train.lambda_gf; });
    num("lambda_reg", "local-head regulariser", [](RC& c) -> double& { return c.train.lambda_reg; });
    num("gamma", "discount", [](RC& c) -> double& { return c.train.gamma; });
    num("lr_q", "value network learning rate", [](RC& c) -> double& { return c.train.lr_q; });
    num("lr_fnet", "F-Net learning rate", [](RC& c) -> double& { return c.train.lr_fnet; });
    choice("q_optimizer", "sgd | rmsprop | adam", [](RC& c) -> nn::OptimizerKind& { return c.train.q_optimizer; },
           [](const std::string& v) { return parse_optimizer("q_optimizer", v); }, optimizer_name);
    num("grad_clip", "gradient norm clip (0: off)", [](RC& c) -> double& { return c.train.grad_clip; });
    num("epsilon_start", "initial exploration rate", [](RC& c) -> double& { return c.train.epsilon_start; });
    num("epsilon_finish", "final exploration rate", [](RC& c) -> double& { return c.train.epsilon_finish; });
    num("epsilon_anneal_steps", "linear annealing steps", [](RC& c) -> long long& { return c.train.epsilon_anneal_steps; });
    choice("target_mode", "periodic | ema", [](RC& c) -> TargetMode& { return c.train.target_mode; },
           [](const std::string& v) {
             if (v == "periodic") return TargetMode::periodic;
             if (v == "ema") return TargetMode::ema;
             throw ConfigError("unknown target mode '" + v + "'");
           },
           [](TargetMode m) { return m == TargetMode::periodic ? "periodic" : "ema"; });
    num("target_interval", "updates between target copies", [](RC& c) -> int& { return c.train.target_interval; });
    num("target_rate", "EMA target rate", [](RC& c) -> double& { return c.train.target_rate; });
    choice("strategy", "max | min | maxmin | all", [](RC& c) -> IndexStrategy& { return c.train.strategy; },
           [](const std::string& v) { return parse_index_strategy(v); }, [](IndexStrategy s) { return to_string(s); });
    choice("intrinsic_mode", "raw | nonpositive | progressive", [](RC& c) -> IntrinsicMode& { return c.train.intrinsic_mode; },
           [](const std::string& v) { return parse_intrinsic_mode(v); }, [](IntrinsicMode m) { return to_string(m); });
    choice("count_target", "formation | joint_observation | individual_observation",
           [](RC& c) -> CountTarget& { return c.train.count_target; },
           [](const std::string& v) { return parse_count_target(v); }, [](CountTarget t) { return to_string(t); });
    num("norm_decay", "decay of reward normalisation statistics", [](RC& c) -> double& { return c.train.norm_decay; });
    num("batch_size", "episodes per batch", [](RC& c) -> int& { return c.train.batch_size; });
    num("buffer_capacity", "replay capacity in episodes", [](RC& c) -> int& { return c.train.buffer_capacity; });
    num("fnet_samples", "timesteps per F-Net update", [](RC& c) -> int& { return c.train.fnet_samples; });
    num("prior_samples", "prior draws per slot for r_aware", [](RC& c) -> int& { return c.train.prior_samples; });
    num("eval_interval", "environment steps between metrics rows", [](RC& c) -> long long& { return c.train.eval_interval; });
    num("eval_episodes", "greedy episodes per evaluation", [](RC& c) -> int& { return c.train.eval_episodes; });
    num("agent_hidden", "agent GRU width", [](RC& c) -> int& { return c.train.agent_hidden; });
    num("mixing_embed", "mixer embedding width", [](RC& c) -> int& { return c.train.mixing_embed; });
    num("hypernet_hidden", "hypernetwork hidden width", [](RC& c) -> int& { return c.train.hypernet_hidden; });
    num("fnet_hidden", "F-Net hidden width", [](RC& c) -> int& { return c.train.fnet_hidden; });
    num("latent_dim", "latent dimension", [](RC& c) -> int& { return c.train.latent_dim; });
    flag("formation_head", "use the formation value head", [](RC& c) -> bool& { return c.train.formation_head; });
    flag("train_formation_head", "train the formation value head (false: zero and frozen)",
         [](RC& c) -> bool& { return c.train.train_formation_head; });
    return f;
  }();
  return fields;
}

/// Every invariant violation of a complete configuration.
inline std::vector<std::string> config_problems(const RunConfiguration& c) {
  std::vector<std::string> out;
  for (const auto& p : c.env.problems()) out.push_back("env: " + p);
  for (const auto& p : c.train.problems()) out.push_back("train: " + p);
  if (c.env.n_agents < 2 && c.train.fnet_enabled())
    out.push_back("n_agents: formation components need at least two agents (set beta2 = 0 and formation_head = false)");
  return out;
}

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// key = value lines; '#' starts a comment.
inline ConfigOverrides parse_config_text(std::istream& is, std::vector<std::string>& problems) {
  ConfigOverrides out;
  std::string line;
  for (int lineno = 1; std::getline(is, line); ++lineno) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back("line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    out.emplace_back(config_detail::trim(line.substr(0, eq)), config_detail::trim(line.substr(eq + 1)));
  }
  return out;
}

/// Applies the file's settings, then the overrides, then validates. Throws a
/// ValidationError listing every problem.
inline RunConfiguration parse_and_validate(std::istream* file, const ConfigOverrides& overrides,
                                           RunConfiguration base = {}) {
  std::vector<std::string> problems;
  ConfigOverrides all;
  if (file) all = parse_config_text(*file, problems);
  all.insert(all.end(), overrides.begin(), overrides.end());
  for (const auto& [key, value] : all) {
    const auto& fields = config_fields();
    auto it = std::find_if(fields.begin(), fields.end(), [&](const ConfigField& f) { return f.key == key; });
    if (it == fields.end()) {
      problems.push_back("unknown key '" + key + "'");
      continue;
    }
    try {
      it->set(base, value);
    } catch (const ConfigError& e) {
      problems.emplace_back(e.what());
    }
  }
  for (auto& p : config_problems(base)) problems.push_back(std::move(p));
  if (!problems.empty()) throw ValidationError(problems);
  return base;
}

inline RunConfiguration parse_and_validate(const std::string& text, const ConfigOverrides& overrides = {}) {
  std::istringstream is(text);
  return parse_and_validate(&is, overrides);
}

inline void write_config(std::ostream& os, const RunConfiguration& c) {
  for (const auto& f : config_fields()) os << f.key << " = " << f.get(c) << '\n';
}

}  // namespace fox
