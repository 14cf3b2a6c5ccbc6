#include <doctest.h>

#include "refrec/config.hpp"
#include "refrec/errors.hpp"

using namespace refrec;
using nlohmann::json;

TEST_SUITE("config") {

TEST_CASE("train config round trip") {
  TrainConfig cfg;
  cfg.reward.alpha = 0.4;
  cfg.reward.threshold_mode = ThresholdMode::kFixed;
  cfg.reward.quality_reward = false;
  cfg.grpo.kl_beta = 0.2;
  cfg.steps = 17;
  cfg.seed = 99;
  cfg.levels = {Level::kHard, Level::kReject};
  const json j = cfg;
  TrainConfig back;
  from_json(j, back);
  CHECK(json(back) == j);
  CHECK(back.levels == cfg.levels);
  CHECK(back.reward.threshold_mode == ThresholdMode::kFixed);
  CHECK(j["levels"] == json{"hard", "reject"});
}

TEST_CASE("partial documents merge over the current values") {
  TrainConfig cfg;
  from_json(json::parse(R"({"reward": {"p": 0.25}, "steps": 12})"), cfg);
  CHECK(cfg.reward.p == 0.25);
  CHECK(cfg.reward.alpha == 0.5);
  CHECK(cfg.steps == 12);
  CHECK(cfg.learning_rate == 0.1);
}

TEST_CASE("unknown keys and wrong types are rejected") {
  TrainConfig cfg;
  CHECK_THROWS_AS(from_json(json::parse(R"({"stepz": 3})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"reward": {"beta": 0.8}})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"steps": "many"})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"steps": 1.5})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"seed": -1})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"levels": ["easy", "brutal"]})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"reward": {"threshold_mode": "cosine"}})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"({"reward": {"quality_reward": 1}})"), cfg), SchemaError);
  CHECK_THROWS_AS(from_json(json::parse(R"([1, 2])"), cfg), SchemaError);
  try {
    from_json(json::parse(R"({"grpo": {"kl": 1}})"), cfg);
  } catch (const SchemaError& e) {
    CHECK(e.field() == "grpo.kl");
  }
}

TEST_CASE("pipeline config round trip") {
  PipelineConfig cfg;
  cfg.s_min = 0.4;
  cfg.retry.max_attempts = 5;
  cfg.retry.base_delay = std::chrono::milliseconds(7);
  const json j = cfg;
  PipelineConfig back;
  from_json(j, back);
  CHECK(json(back) == j);
  CHECK(back.retry.base_delay.count() == 7);
  CHECK_THROWS_AS(from_json(json::parse(R"({"s_max": 1})"), back), SchemaError);
}

TEST_CASE("threshold mode names") {
  CHECK(parse_threshold_mode("fixed") == ThresholdMode::kFixed);
  CHECK(to_string(ThresholdMode::kDynamic) == "dynamic");
  CHECK_THROWS_AS(parse_threshold_mode("linear"), InvalidInput);
}

}
