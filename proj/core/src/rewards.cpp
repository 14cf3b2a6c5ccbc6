#include "refrec/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

bool unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

void check_step(std::int64_t step, const RewardConfig& cfg) {
  if (step < 0 || step > cfg.total_steps) {
    throw InvalidInput("step " + std::to_string(step) + " outside [0, " +
                       std::to_string(cfg.total_steps) + "]");
  }
}

}  // namespace

void RewardConfig::validate() const {
  if (!unit(alpha) || !unit(beta_end) || alpha > beta_end) {
    throw InvalidInput("reward config requires 0 <= alpha <= beta_end <= 1");
  }
  if (!unit(d_max)) {
    throw InvalidInput("reward config requires 0 <= d_max <= 1");
  }
  if (!std::isfinite(p) || p < 0.0) {
    throw InvalidInput("reward config requires p >= 0");
  }
  if (total_steps < 1) {
    throw InvalidInput("reward config requires total_steps >= 1");
  }
  if (group_size < 1) {
    throw InvalidInput("reward config requires group_size >= 1");
  }
  if (!std::isfinite(tau_q_start) || !std::isfinite(tau_q_end) || tau_q_start < 0.0 ||
      tau_q_start > tau_q_end || tau_q_end > group_size) {
    throw InvalidInput("reward config requires 0 <= tau_q_start <= tau_q_end <= group_size");
  }
}

RewardConfig RewardConfig::with_group_size(int n) {
  RewardConfig cfg;
  cfg.group_size = n;
  cfg.tau_q_start = 0.25 * n;
  cfg.tau_q_end = 0.5 * n;
  return cfg;
}

double dyiou_threshold(std::int64_t step, double area_ratio, const RewardConfig& cfg) {
  check_step(step, cfg);
  if (!unit(area_ratio)) {
    throw InvalidInput("area ratio must lie in [0, 1]");
  }
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  const double scheduled = cfg.alpha + (cfg.beta_end - cfg.alpha) * progress;
  return std::max(scheduled - cfg.d_max * (1.0 - area_ratio), cfg.alpha);
}

int dyiou_reward(double iou_value, double threshold) noexcept { return iou_value > threshold ? 1 : 0; }

double quality_threshold(std::int64_t step, const RewardConfig& cfg) {
  check_step(step, cfg);
  const double progress = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.tau_q_start + (cfg.tau_q_end - cfg.tau_q_start) * progress;
}

double effective_threshold(std::int64_t step, double area_ratio, const RewardConfig& cfg) {
  if (cfg.threshold_mode == ThresholdMode::kFixed) {
    check_step(step, cfg);
    return cfg.alpha;
  }
  return dyiou_threshold(step, area_ratio, cfg);
}

std::vector<RewardBreakdown> score_group(std::span<const ParsedResponse> responses,
                                         const GroundTruth& gt, const ImageDims& dims,
                                         std::int64_t step, const RewardConfig& cfg) {
  cfg.validate();
  if (responses.size() != static_cast<std::size_t>(cfg.group_size)) {
    throw InvalidInput("group has " + std::to_string(responses.size()) +
                       " responses, config expects " + std::to_string(cfg.group_size));
  }
  const double threshold = gt ? effective_threshold(step, area_ratio(*gt, dims), cfg)
                              : effective_threshold(step, 1.0, cfg);

  std::vector<RewardBreakdown> out(responses.size());
  int k = 0;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const ParsedResponse& r = responses[i];
    RewardBreakdown& b = out[i];
    b.format = format_reward(r);
    b.threshold_used = threshold;
    if (gt) {
      if (auto pred = r.box()) {
        b.iou_value = iou(*pred, *gt);
        b.dyiou = dyiou_reward(b.iou_value, threshold);
      }
    } else {
      // Absent target: the localisation bit becomes an abstention-correctness bit.
      b.dyiou = r.is_abstain() ? 1 : 0;
    }
    b.correct = b.dyiou == 1;
    k += b.dyiou;
  }

  const double n = static_cast<double>(responses.size());
  const bool hard = cfg.quality_reward && static_cast<double>(k) < quality_threshold(step, cfg);
  const double bonus = hard ? (static_cast<double>(k) / n) * cfg.p : 0.0;
  for (auto& b : out) {
    b.quality_adjustment = bonus == 0.0 ? 0.0 : (b.correct ? bonus : -bonus);
    b.total = b.format + b.dyiou + b.quality_adjustment;
  }
  return out;
}

}  // namespace refrec
