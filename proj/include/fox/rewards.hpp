#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "fox/common.hpp"

namespace fox {

enum class IntrinsicMode { raw, nonpositive, progressive };

inline std::string_view to_string(IntrinsicMode m) {
  switch (m) {
    case IntrinsicMode::raw: return "raw";
    case IntrinsicMode::nonpositive: return "nonpositive";
    case IntrinsicMode::progressive: return "progressive";
  }
  return "?";
}

inline IntrinsicMode parse_intrinsic_mode(std::string_view s) {
  if (s == "raw") return IntrinsicMode::raw;
  if (s == "nonpositive") return IntrinsicMode::nonpositive;
  if (s == "progressive") return IntrinsicMode::progressive;
  throw ConfigError("unknown intrinsic mode '" + std::string(s) + "'");
}

/// Running statistics of the awareness reward used by the normalised modes:
/// a decaying maximum (never below the latest batch maximum) and an
/// exponential mean of |r_aware|.
struct RewardNormalizer {
  double decay = 0.99;
  double running_max = 0.0;
  double running_abs_mean = 0.0;
  bool initialised = false;

  void observe(const std::vector<double>& r_aware) {
    if (r_aware.empty()) return;
    double batch_max = r_aware.front(), abs_sum = 0.0;
    for (double r : r_aware) {
      batch_max = std::max(batch_max, r);
      abs_sum += std::abs(r);
    }
    const double abs_mean = abs_sum / static_cast<double>(r_aware.size());
    if (!initialised) {
      running_max = batch_max;
      running_abs_mean = abs_mean;
      initialised = true;
      return;
    }
    running_max = std::max(batch_max, decay * running_max + (1.0 - decay) * batch_max);
    running_abs_mean = decay * running_abs_mean + (1.0 - decay) * abs_mean;
  }
};

struct RewardWeights {
  double beta1 = 0.0;
  double beta2 = 0.0;
  IntrinsicMode mode = IntrinsicMode::raw;
};

/// r_tot = r_ext + beta1 * r_exp + beta2 * r_aware, after the mode's normalisation.
inline double total_reward(double r_ext, double r_exp, double r_aware, const RewardWeights& w,
                           const RewardNormalizer& norm = {}) {
  switch (w.mode) {
    case IntrinsicMode::raw: break;
    case IntrinsicMode::nonpositive:
      // 1/sqrt(N) <= 1
      r_exp -= 1.0;
      r_aware -= norm.initialised ? norm.running_max : r_aware;
      break;
    case IntrinsicMode::progressive:
      r_aware /= std::max(norm.initialised ? norm.running_abs_mean : 1.0, 1e-8);
      break;
  }
  return r_ext + w.beta1 * r_exp + w.beta2 * r_aware;
}

}  // namespace fox
