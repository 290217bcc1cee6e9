#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fox/common.hpp"

namespace fox {

enum class CountTarget { formation, joint_observation, individual_observation };

inline std::string_view to_string(CountTarget t) {
  switch (t) {
    case CountTarget::formation: return "formation";
    case CountTarget::joint_observation: return "joint_observation";
    case CountTarget::individual_observation: return "individual_observation";
  }
  return "?";
}

inline CountTarget parse_count_target(std::string_view s) {
  if (s == "formation") return CountTarget::formation;
  if (s == "joint_observation" || s == "joint") return CountTarget::joint_observation;
  if (s == "individual_observation" || s == "individual") return CountTarget::individual_observation;
  throw ConfigError("unknown count target '" + std::string(s) + "'");
}

/// Exact tabular visitation counts over canonical keys.
class VisitationTable {
 public:
  explicit VisitationTable(int round_digits = 1, CountTarget target = CountTarget::formation)
      : l_(round_digits), target_(target) {}

  std::uint64_t record_visit(const std::string& key) {
    ++total_;
    return ++counts_[key];
  }

  std::uint64_t count(const std::string& key) const {
    auto it = counts_.find(key);
    return it == counts_.end() ? 0 : it->second;
  }

  /// 1/sqrt(N). The visit for this step must already be recorded.
  double exploration_reward(const std::string& key) const {
    auto it = counts_.find(key);
    if (it == counts_.end())
      throw ContractError("exploration_reward: key was never visited (record_visit must come first)");
    return 1.0 / std::sqrt(static_cast<double>(it->second));
  }

  std::size_t coverage() const { return counts_.size(); }
  std::uint64_t total_visits() const { return total_; }
  int round_digits() const { return l_; }
  CountTarget target() const { return target_; }

  /// (key, count) rows sorted by key.
  std::vector<std::pair<std::string, std::uint64_t>> sorted_entries() const {
    std::vector<std::pair<std::string, std::uint64_t>> rows(counts_.begin(), counts_.end());
    std::sort(rows.begin(), rows.end());
    return rows;
  }

  void write_csv(std::ostream& os) const {
    os << "key,count\n";
    for (const auto& [key, n] : sorted_entries()) os << '"' << key << "\"," << n << '\n';
  }

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  int l_;
  CountTarget target_;
};

}  // namespace fox
