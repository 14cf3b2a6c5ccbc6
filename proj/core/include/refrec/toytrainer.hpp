#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "refrec/grpo.hpp"
#include "refrec/response.hpp"
#include "refrec/rewards.hpp"
#include "refrec/scene.hpp"

namespace refrec {

/// Per-candidate features: category match, attribute match, relation match,
/// tightness. The abstain action sees a bias and a "no candidate matches every
/// cue" indicator. Scores are linear in one shared weight vector.
inline constexpr std::size_t kCandidateFeatures = 4;
inline constexpr std::size_t kAbstainFeatures = 2;
inline constexpr std::size_t kPolicyParameters = kCandidateFeatures + kAbstainFeatures;

/// Row-major (M+1) x kPolicyParameters feature matrix; the last row is Abstain.
std::vector<double> action_features(const SceneSpec& scene);

/// Linear-softmax categorical policy over the candidate menu plus Abstain.
/// The reference weights are frozen at construction.
class PolicyState {
 public:
  PolicyState();
  explicit PolicyState(std::vector<double> initial_weights);

  std::span<double> weights() noexcept { return weights_; }
  std::span<const double> weights() const noexcept { return weights_; }
  std::span<const double> reference_weights() const noexcept { return reference_; }

 private:
  std::vector<double> weights_;
  std::vector<double> reference_;
};

std::vector<double> action_scores(std::span<const double> weights, const SceneSpec& scene);
std::vector<double> action_log_probabilities(std::span<const double> weights, const SceneSpec& scene);
std::vector<double> action_probabilities(std::span<const double> weights, const SceneSpec& scene);

/// Index of the Abstain action for a scene (== number of candidates).
inline std::size_t abstain_action(const SceneSpec& scene) noexcept { return scene.candidates.size(); }

struct RolloutResult {
  std::vector<std::size_t> actions;
  std::vector<std::string> texts;
  std::vector<ParsedResponse> responses;
};

/// Samples n actions, renders each as template text and re-parses it.
RolloutResult rollout_actions(const PolicyState& policy, const SceneSpec& scene, int n,
                              std::uint64_t rng_seed);
std::vector<ParsedResponse> rollout(const PolicyState& policy, const SceneSpec& scene, int n,
                                    std::uint64_t rng_seed);

/// Everything the surrogate needs about one scene's sampled group.
struct ScoredGroup {
  SceneSpec scene;
  std::vector<std::size_t> actions;
  std::vector<double> advantages;
};

/// Mean over groups of the unclipped surrogate evaluated at `weights`, with
/// sampling weights `old_weights` and KL against `reference_weights`.
double surrogate_objective(std::span<const double> weights, std::span<const double> old_weights,
                           std::span<const double> reference_weights,
                           std::span<const ScoredGroup> groups, const GrpoConfig& cfg);

/// Analytic gradient of surrogate_objective with respect to `weights`.
std::vector<double> surrogate_gradient(std::span<const double> weights,
                                       std::span<const double> old_weights,
                                       std::span<const double> reference_weights,
                                       std::span<const ScoredGroup> groups, const GrpoConfig& cfg);

struct TrainConfig {
  RewardConfig reward;
  GrpoConfig grpo;
  std::int64_t steps = 300;
  int scenes_per_step = 16;
  double learning_rate = 0.1;
  std::uint64_t seed = 1;
  std::vector<Level> levels{Level::kEasy};
  int eval_scenes = 100;
  int threads = 1;

  void validate() const;
};

struct TrainRecord {
  std::int64_t step = 0;
  double mean_reward = 0.0;
  double mean_iou = 0.0;
  double kl = 0.0;
  double surrogate = 0.0;
  double tau_iou_at_mean_s = 0.0;
  double hard_group_fraction = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::optional<std::string> abort_reason;
};

void write_jsonl(std::ostream& os, const TrainLog& log);
void write_csv(std::ostream& os, const TrainLog& log);

struct EvalSummary {
  std::size_t scenes = 0;
  double mean_iou = 0.0;
  double fraction_iou_ge_0_8 = 0.0;
  double abstain_accuracy = 0.0;  // over absent-target scenes; 0 when there are none
};

struct TrainResult {
  TrainLog log;
  PolicyState policy;
  EvalSummary held_out;
};

/// Held-out scenes for a run: disjoint seed stream from training scenes.
std::vector<SceneSpec> held_out_scenes(const TrainConfig& cfg);

/// Greedy (argmax) evaluation; ties break toward the lowest action index.
EvalSummary evaluate_greedy(std::span<const double> weights, std::span<const SceneSpec> scenes);

/// Largest total-variation distance between the policy and its reference.
double max_total_variation(const PolicyState& policy, std::span<const SceneSpec> scenes);

TrainResult train(const TrainConfig& cfg);

struct ScheduleComparison {
  TrainResult fixed;
  TrainResult dynamic;
};

/// Two identically seeded runs differing only in the threshold mode.
ScheduleComparison compare_schedules(const TrainConfig& cfg);

}  // namespace refrec
