#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "refrec/geometry.hpp"
#include "refrec/response.hpp"

namespace refrec {

enum class ThresholdMode {
  kFixed,    // tau = alpha at every step
  kDynamic,  // step- and size-dependent schedule
};

/// Reward-stack hyperparameters. The quality-threshold schedule defaults to
/// 0.25n -> 0.5n.
struct RewardConfig {
  double alpha = 0.5;      // start threshold
  double beta_end = 0.8;   // end threshold
  double d_max = 0.15;     // small-box threshold relief cap
  double p = 0.5;          // group-quality weight
  std::int64_t total_steps = 5000;
  double tau_q_start = 2.0;
  double tau_q_end = 4.0;
  int group_size = 8;
  ThresholdMode threshold_mode = ThresholdMode::kDynamic;
  bool quality_reward = true;

  /// Throws InvalidInput on any violated range constraint.
  void validate() const;

  /// Config with tau_q endpoints set to 0.25n and 0.5n for group size n.
  static RewardConfig with_group_size(int n);
};

/// Ground truth for one query; std::nullopt means the target is absent.
using GroundTruth = std::optional<Box>;

struct RewardBreakdown {
  int format = 0;
  int dyiou = 0;
  double iou_value = 0.0;
  double threshold_used = 0.0;
  double quality_adjustment = 0.0;
  double total = 0.0;
  bool correct = false;
};

/// IoU threshold at step t for a target covering fraction s of the image:
/// max(alpha + (beta_end - alpha) t/T - d_max (1 - s), alpha).
double dyiou_threshold(std::int64_t step, double area_ratio, const RewardConfig& cfg);

/// 1 iff iou strictly exceeds the threshold.
int dyiou_reward(double iou_value, double threshold) noexcept;

/// Linear schedule from tau_q_start to tau_q_end over [0, T].
double quality_threshold(std::int64_t step, const RewardConfig& cfg);

/// Threshold actually applied, honouring cfg.threshold_mode.
double effective_threshold(std::int64_t step, double area_ratio, const RewardConfig& cfg);

/// Scores one sampled group against its ground truth, including the
/// hard-group quality adjustment of +-(k/n) p.
std::vector<RewardBreakdown> score_group(std::span<const ParsedResponse> responses,
                                         const GroundTruth& gt, const ImageDims& dims,
                                         std::int64_t step, const RewardConfig& cfg);

}  // namespace refrec
