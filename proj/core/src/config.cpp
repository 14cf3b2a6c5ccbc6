#include "refrec/config.hpp"

#include <set>
#include <string>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::string_view section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw SchemaError(std::string(section) + " config must be an object", std::string(section));
  const std::set<std::string> keys(allowed.begin(), allowed.end());
  for (const auto& item : j.items()) {
    if (!keys.contains(item.key())) {
      throw SchemaError("unknown key '" + item.key() + "' in " + std::string(section) + " config",
                        std::string(section) + "." + item.key());
    }
  }
}

template <typename T>
void read(const json& j, std::string_view section, const char* key, T& out) {
  if (!j.contains(key)) return;
  const json& v = j.at(key);
  const std::string field = std::string(section) + "." + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw SchemaError("'" + field + "' must be a boolean", field);
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw SchemaError("'" + field + "' must be an integer", field);
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_integer() && !v.is_number_unsigned()) throw SchemaError("'" + field + "' must be non-negative", field);
    }
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) throw SchemaError("'" + field + "' must be a number", field);
  } else {
    if (!v.is_string()) throw SchemaError("'" + field + "' must be a string", field);
  }
  out = v.get<T>();
}

}  // namespace

std::string_view to_string(ThresholdMode mode) noexcept {
  return mode == ThresholdMode::kFixed ? "fixed" : "dynamic";
}

ThresholdMode parse_threshold_mode(std::string_view name) {
  if (name == "fixed") return ThresholdMode::kFixed;
  if (name == "dynamic") return ThresholdMode::kDynamic;
  throw InvalidInput("threshold mode must be 'fixed' or 'dynamic', got '" + std::string(name) + "'");
}

void to_json(json& j, const RewardConfig& cfg) {
  j = json{{"alpha", cfg.alpha},
           {"beta_end", cfg.beta_end},
           {"d_max", cfg.d_max},
           {"p", cfg.p},
           {"total_steps", cfg.total_steps},
           {"tau_q_start", cfg.tau_q_start},
           {"tau_q_end", cfg.tau_q_end},
           {"group_size", cfg.group_size},
           {"threshold_mode", std::string(to_string(cfg.threshold_mode))},
           {"quality_reward", cfg.quality_reward}};
}

void from_json(const json& j, RewardConfig& cfg) {
  check_keys(j, "reward",
             {"alpha", "beta_end", "d_max", "p", "total_steps", "tau_q_start", "tau_q_end", "group_size",
              "threshold_mode", "quality_reward"});
  read(j, "reward", "alpha", cfg.alpha);
  read(j, "reward", "beta_end", cfg.beta_end);
  read(j, "reward", "d_max", cfg.d_max);
  read(j, "reward", "p", cfg.p);
  read(j, "reward", "total_steps", cfg.total_steps);
  read(j, "reward", "tau_q_start", cfg.tau_q_start);
  read(j, "reward", "tau_q_end", cfg.tau_q_end);
  read(j, "reward", "group_size", cfg.group_size);
  std::string mode(to_string(cfg.threshold_mode));
  read(j, "reward", "threshold_mode", mode);
  try {
    cfg.threshold_mode = parse_threshold_mode(mode);
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what(), "reward.threshold_mode");
  }
  read(j, "reward", "quality_reward", cfg.quality_reward);
}

void to_json(json& j, const GrpoConfig& cfg) {
  j = json{{"kl_beta", cfg.kl_beta}, {"epsilon_std", cfg.epsilon_std}};
}

void from_json(const json& j, GrpoConfig& cfg) {
  check_keys(j, "grpo", {"kl_beta", "epsilon_std"});
  read(j, "grpo", "kl_beta", cfg.kl_beta);
  read(j, "grpo", "epsilon_std", cfg.epsilon_std);
}

void to_json(json& j, const TrainConfig& cfg) {
  json levels = json::array();
  for (Level l : cfg.levels) levels.push_back(std::string(to_string(l)));
  j = json{{"reward", cfg.reward},
           {"grpo", cfg.grpo},
           {"steps", cfg.steps},
           {"scenes_per_step", cfg.scenes_per_step},
           {"learning_rate", cfg.learning_rate},
           {"seed", cfg.seed},
           {"levels", levels},
           {"eval_scenes", cfg.eval_scenes},
           {"threads", cfg.threads}};
}

void from_json(const json& j, TrainConfig& cfg) {
  check_keys(j, "train",
             {"reward", "grpo", "steps", "scenes_per_step", "learning_rate", "seed", "levels", "eval_scenes",
              "threads"});
  if (j.contains("reward")) from_json(j.at("reward"), cfg.reward);
  if (j.contains("grpo")) from_json(j.at("grpo"), cfg.grpo);
  read(j, "train", "steps", cfg.steps);
  read(j, "train", "scenes_per_step", cfg.scenes_per_step);
  read(j, "train", "learning_rate", cfg.learning_rate);
  read(j, "train", "seed", cfg.seed);
  read(j, "train", "eval_scenes", cfg.eval_scenes);
  read(j, "train", "threads", cfg.threads);
  if (j.contains("levels")) {
    const json& l = j.at("levels");
    if (!l.is_array()) throw SchemaError("'train.levels' must be an array", "train.levels");
    std::vector<Level> levels;
    for (const json& v : l) {
      if (!v.is_string()) throw SchemaError("'train.levels' entries must be strings", "train.levels");
      try {
        levels.push_back(parse_level(v.get<std::string>()));
      } catch (const InvalidInput& e) {
        throw SchemaError(e.what(), "train.levels");
      }
    }
    cfg.levels = std::move(levels);
  }
}

void to_json(json& j, const PipelineConfig& cfg) {
  j = json{{"min_categories", cfg.min_categories},
           {"min_objects", cfg.min_objects},
           {"min_side", cfg.min_side},
           {"max_side", cfg.max_side},
           {"s_min", cfg.s_min},
           {"uniqueness_iou", cfg.uniqueness_iou},
           {"candidates_per_object", cfg.candidates_per_object},
           {"max_inflight", cfg.max_inflight},
           {"threads", cfg.threads},
           {"retry_attempts", cfg.retry.max_attempts},
           {"retry_base_delay_ms", cfg.retry.base_delay.count()}};
}

void from_json(const json& j, PipelineConfig& cfg) {
  check_keys(j, "pipeline",
             {"min_categories", "min_objects", "min_side", "max_side", "s_min", "uniqueness_iou",
              "candidates_per_object", "max_inflight", "threads", "retry_attempts", "retry_base_delay_ms"});
  read(j, "pipeline", "min_categories", cfg.min_categories);
  read(j, "pipeline", "min_objects", cfg.min_objects);
  read(j, "pipeline", "min_side", cfg.min_side);
  read(j, "pipeline", "max_side", cfg.max_side);
  read(j, "pipeline", "s_min", cfg.s_min);
  read(j, "pipeline", "uniqueness_iou", cfg.uniqueness_iou);
  read(j, "pipeline", "candidates_per_object", cfg.candidates_per_object);
  read(j, "pipeline", "max_inflight", cfg.max_inflight);
  read(j, "pipeline", "threads", cfg.threads);
  read(j, "pipeline", "retry_attempts", cfg.retry.max_attempts);
  std::int64_t delay = cfg.retry.base_delay.count();
  read(j, "pipeline", "retry_base_delay_ms", delay);
  cfg.retry.base_delay = std::chrono::milliseconds(delay);
}

}  // namespace refrec
