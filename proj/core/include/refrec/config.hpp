#pragma once

#include <nlohmann/json.hpp>

#include "refrec/grpo.hpp"
#include "refrec/pipeline.hpp"
#include "refrec/rewards.hpp"
#include "refrec/toytrainer.hpp"

namespace refrec {

// JSON views of the run configs. Reading merges present keys over the current
// values and throws SchemaError on unknown keys or wrong types.

void to_json(nlohmann::json& j, const RewardConfig& cfg);
void from_json(const nlohmann::json& j, RewardConfig& cfg);

void to_json(nlohmann::json& j, const GrpoConfig& cfg);
void from_json(const nlohmann::json& j, GrpoConfig& cfg);

/// {"reward": {...}, "grpo": {...}, "steps", "scenes_per_step", "learning_rate",
///  "seed", "levels": ["easy", ...], "eval_scenes", "threads"}
void to_json(nlohmann::json& j, const TrainConfig& cfg);
void from_json(const nlohmann::json& j, TrainConfig& cfg);

/// Prompt assets are not serialized; they belong to the clients config.
void to_json(nlohmann::json& j, const PipelineConfig& cfg);
void from_json(const nlohmann::json& j, PipelineConfig& cfg);

std::string_view to_string(ThresholdMode mode) noexcept;
ThresholdMode parse_threshold_mode(std::string_view name);

}  // namespace refrec
