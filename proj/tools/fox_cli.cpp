// fox: train, pure-explore, verify, dump-config.
//
// Exit codes: 0 success, 1 invalid configuration or arguments, 2 runtime failure.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fox/config.hpp"
#include "fox/trainer.hpp"
#include "fox/verify.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config_path;
  std::string out;
  std::vector<std::string> sets;
  std::vector<std::string> count_targets;
  fox::ConfigOverrides flags;
};

fs::path make_run_dir(const fs::path& base, std::uint64_t seed) {
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", std::localtime(&now));
  const std::string name = std::string(stamp) + "_seed" + std::to_string(seed);
  fs::path dir = base / name;
  for (int k = 1; fs::exists(dir); ++k) dir = base / (name + "-" + std::to_string(k));
  fs::create_directories(dir);
  return dir;
}

void echo_config(const fs::path& dir, const fox::RunConfiguration& cfg) {
  std::ofstream os(dir / "config.cfg");
  if (!os) throw fox::RuntimeError("cannot write " + (dir / "config.cfg").string());
  fox::write_config(os, cfg);
}

fox::RunConfiguration load(const Options& o, fox::RunConfiguration base = {}) {
  fox::ConfigOverrides overrides = o.flags;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw fox::ValidationError({"--set expects key=value, got '" + s + "'"});
    overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.config_path.empty()) return fox::parse_and_validate(nullptr, overrides, base);
  std::ifstream file(o.config_path);
  if (!file) throw fox::ValidationError({"cannot read config file '" + o.config_path + "'"});
  return fox::parse_and_validate(&file, overrides, base);
}

fs::path out_base(const Options& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("FOX_OUT_DIR"); env && *env) return env;
  return "runs";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Formation-aware exploration for cooperative multi-agent reinforcement learning"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;

  app.add_option("--config", o.config_path, "key = value configuration file");
  auto flag = [&](const std::string& name, const std::string& key, const std::string& help) {
    app.add_option_function<std::string>(name, [&o, key](const std::string& v) { o.flags.emplace_back(key, v); }, help);
  };
  flag("--seed", "seed", "master seed");
  flag("--steps", "total_steps", "environment steps");
  flag("--beta1", "beta1", "weight of the count-based reward");
  flag("--beta2", "beta2", "weight of the awareness reward");
  flag("--strategy", "strategy", "index set strategy: max, min, maxmin, all");
  flag("--intrinsic-mode", "intrinsic_mode", "raw, nonpositive, progressive");
  flag("--m", "m", "SimHash bits");
  flag("--l", "l", "rounding digits");
  app.add_option("--count-target", o.count_targets,
                 "formation, joint_observation, individual_observation (repeatable)");
  app.add_option("--out", o.out, "output directory (default $FOX_OUT_DIR, else ./runs)");
  app.add_option("--set", o.sets, "any configuration key, as key=value (repeatable)");

  auto* train = app.add_subcommand("train", "train with the configured rewards");
  auto* pure = app.add_subcommand("pure-explore", "intrinsic-only training for each count target");
  auto* verify = app.add_subcommand("verify", "run the self-check suites");
  auto* dump = app.add_subcommand("dump-config", "print the effective configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*dump) {
      fox::write_config(std::cout, load(o));
      return 0;
    }
    if (*verify) {
      bool ok = true;
      for (const auto& r : fox::verify::all_suites()) {
        std::cout << fox::verify::describe(r) << '\n' << r.detail;
        ok = ok && r.pass();
      }
      return ok ? 0 : 2;
    }
    if (*train) {
      const fox::RunConfiguration cfg = load(o);
      if (!o.count_targets.empty()) throw fox::ValidationError({"--count-target applies to pure-explore; use --set count_target=..."});
      const fs::path dir = make_run_dir(out_base(o), cfg.train.seed);
      echo_config(dir, cfg);
      std::cerr << "writing to " << dir.string() << '\n';
      fox::run<float>(cfg.env, cfg.train, dir, &std::cerr);
      return 0;
    }
    if (*pure) {
      fox::RunConfiguration base;
      base.env.reward_mode = fox::RewardMode::pure_exploration;
      fox::RunConfiguration cfg = load(o, base);
      std::vector<fox::CountTarget> targets;
      std::vector<std::string> bad;
      for (const auto& t : o.count_targets) {
        try {
          targets.push_back(fox::parse_count_target(t));
        } catch (const fox::ConfigError& e) {
          bad.push_back(std::string("--count-target: ") + e.what());
        }
      }
      if (!bad.empty()) throw fox::ValidationError(bad);
      if (targets.empty())
        targets = {fox::CountTarget::formation, fox::CountTarget::joint_observation,
                   fox::CountTarget::individual_observation};
      const fs::path dir = make_run_dir(out_base(o), cfg.train.seed);
      echo_config(dir, cfg);
      std::cerr << "writing to " << dir.string() << '\n';
      for (auto t : targets) {
        const auto rows = fox::pure_exploration_run<float>(cfg.env, cfg.train, t, dir, &std::cerr);
        std::cerr << fox::to_string(t) << ": formation coverage "
                  << (rows.empty() ? 0 : rows.back().formation_coverage) << '\n';
      }
      return 0;
    }
  } catch (const fox::ConfigError& e) {
    std::cerr << "configuration error:\n" << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
