#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "refrec/geometry.hpp"

namespace refrec {

enum class Level { kEasy, kMedium, kHard, kReject };

std::string_view to_string(Level level) noexcept;
/// Throws InvalidInput for unknown names.
Level parse_level(std::string_view name);

struct Difficulty {
  int distractor_count = 0;  // same-category candidates other than the target object
  double target_area_ratio = 0.0;
  int hop_count = 0;

  friend bool operator==(const Difficulty&, const Difficulty&) = default;
};

/// What the synthetic referring expression asks for.
struct ExpressionSpec {
  int category = 0;
  int attribute = 0;
  int hop_count = 0;

  friend bool operator==(const ExpressionSpec&, const ExpressionSpec&) = default;
};

/// One selectable region. Loose boxes enclose the target object but fit it
/// poorly; every other candidate tightly boxes its own object.
struct Candidate {
  Box box;
  int category = 0;
  int attribute = 0;
  double relation_match = 1.0;  // satisfied fraction of the expression's hop chain
  double tightness = 1.0;       // observable box-edge alignment in [0, 1]

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  Level level = Level::kEasy;
  ImageDims dims;
  ExpressionSpec expression;
  std::vector<Candidate> candidates;
  std::optional<std::size_t> target;  // nullopt: the referred object is absent
  Difficulty difficulty;

  std::optional<Box> target_box() const;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

/// Deterministic in (seed, level).
SceneSpec make_scene(std::uint64_t seed, Level level);

nlohmann::json to_json(const SceneSpec& scene);

/// SplitMix64 finaliser; used to derive independent seeds from a run seed.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept;

}  // namespace refrec
