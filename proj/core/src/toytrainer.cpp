#include "refrec/toytrainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include <nlohmann/json.hpp>

#include "refrec/errors.hpp"
#include "refrec/parallel.hpp"

namespace refrec {

namespace {

constexpr std::uint64_t kTrainStream = 0x7121;
constexpr std::uint64_t kEvalStream = 0xE7A1;
constexpr std::uint64_t kRolloutStream = 0xA11;

void check_weights(std::span<const double> w) {
  if (w.size() != kPolicyParameters) {
    throw InvalidInput("policy expects " + std::to_string(kPolicyParameters) + " weights");
  }
}

bool full_match(const Candidate& c, const ExpressionSpec& e) {
  return c.category == e.category && c.attribute == e.attribute && c.relation_match >= 1.0;
}

double log_sum_exp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

std::vector<double> softmax_from_logs(std::span<const double> logp) {
  std::vector<double> p(logp.size());
  std::transform(logp.begin(), logp.end(), p.begin(), [](double x) { return std::exp(x); });
  return p;
}

std::string think_for(const SceneSpec& scene, std::size_t action) {
  if (action == abstain_action(scene)) {
    return "no region matches every cue in the expression";
  }
  return "region " + std::to_string(action) + " best matches the category, attribute and relation cues";
}

// Per-scene view of the policy at one weight vector.
struct SceneDistribution {
  std::vector<double> features;
  std::vector<double> log_probs;
  std::vector<double> probs;
};

SceneDistribution distribution(std::span<const double> weights, const SceneSpec& scene) {
  SceneDistribution d;
  d.features = action_features(scene);
  d.log_probs = action_log_probabilities(weights, scene);
  d.probs = softmax_from_logs(d.log_probs);
  return d;
}

std::vector<Level> levels_or_throw(const TrainConfig& cfg) {
  if (cfg.levels.empty()) throw InvalidInput("train config needs at least one level");
  return cfg.levels;
}

}  // namespace

std::vector<double> action_features(const SceneSpec& scene) {
  const std::size_t actions = scene.candidates.size() + 1;
  std::vector<double> f(actions * kPolicyParameters, 0.0);
  bool any_full = false;
  for (std::size_t j = 0; j < scene.candidates.size(); ++j) {
    const Candidate& c = scene.candidates[j];
    double* row = f.data() + j * kPolicyParameters;
    row[0] = c.category == scene.expression.category ? 1.0 : 0.0;
    row[1] = c.attribute == scene.expression.attribute ? 1.0 : 0.0;
    row[2] = c.relation_match;
    row[3] = c.tightness;
    any_full = any_full || full_match(c, scene.expression);
  }
  double* abstain = f.data() + scene.candidates.size() * kPolicyParameters;
  abstain[kCandidateFeatures + 0] = 1.0;
  abstain[kCandidateFeatures + 1] = any_full ? 0.0 : 1.0;
  return f;
}

PolicyState::PolicyState() : PolicyState(std::vector<double>(kPolicyParameters, 0.0)) {}

PolicyState::PolicyState(std::vector<double> initial_weights)
    : weights_(std::move(initial_weights)), reference_(weights_) {
  check_weights(weights_);
}

std::vector<double> action_scores(std::span<const double> weights, const SceneSpec& scene) {
  check_weights(weights);
  const std::vector<double> f = action_features(scene);
  const std::size_t actions = scene.candidates.size() + 1;
  std::vector<double> s(actions, 0.0);
  for (std::size_t a = 0; a < actions; ++a) {
    for (std::size_t k = 0; k < kPolicyParameters; ++k) {
      s[a] += weights[k] * f[a * kPolicyParameters + k];
    }
  }
  return s;
}

std::vector<double> action_log_probabilities(std::span<const double> weights, const SceneSpec& scene) {
  std::vector<double> s = action_scores(weights, scene);
  const double lse = log_sum_exp(s);
  for (double& x : s) x -= lse;
  return s;
}

std::vector<double> action_probabilities(std::span<const double> weights, const SceneSpec& scene) {
  return softmax_from_logs(action_log_probabilities(weights, scene));
}

RolloutResult rollout_actions(const PolicyState& policy, const SceneSpec& scene, int n,
                              std::uint64_t rng_seed) {
  if (n < 2) throw InvalidInput("rollout needs n >= 2");
  const std::vector<double> p = action_probabilities(policy.weights(), scene);
  std::mt19937_64 engine(rng_seed);
  RolloutResult out;
  out.actions.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
    double cum = 0.0;
    std::size_t action = p.size();
    for (std::size_t a = 0; a < p.size(); ++a) {
      cum += p[a];
      if (u < cum) {
        action = a;
        break;
      }
    }
    // Rounding can leave the cumulative sum just below 1; take the last action with mass.
    if (action == p.size()) {
      action = p.size() - 1;
      while (action > 0 && p[action] == 0.0) --action;
    }
    out.actions.push_back(action);
    const std::string think = think_for(scene, action);
    out.texts.push_back(action == abstain_action(scene)
                            ? render_abstain_response(think)
                            : render_box_response(scene.candidates[action].box, think));
    out.responses.push_back(parse(out.texts.back()));
  }
  return out;
}

std::vector<ParsedResponse> rollout(const PolicyState& policy, const SceneSpec& scene, int n,
                                    std::uint64_t rng_seed) {
  return rollout_actions(policy, scene, n, rng_seed).responses;
}

double surrogate_objective(std::span<const double> weights, std::span<const double> old_weights,
                           std::span<const double> reference_weights,
                           std::span<const ScoredGroup> groups, const GrpoConfig& cfg) {
  if (groups.empty()) throw InvalidInput("surrogate needs at least one group");
  double total = 0.0;
  for (const ScoredGroup& g : groups) {
    const std::vector<double> lp = action_log_probabilities(weights, g.scene);
    const std::vector<double> lp_old = action_log_probabilities(old_weights, g.scene);
    const std::vector<double> p = softmax_from_logs(lp);
    const std::vector<double> q = action_probabilities(reference_weights, g.scene);

    Group group;
    group.advantages = g.advantages;
    group.rewards.assign(g.actions.size(), 0.0);
    for (std::size_t a : g.actions) {
      group.logprob_current.push_back(lp.at(a));
      group.logprob_old.push_back(lp_old.at(a));
    }
    total += surrogate(group, kl_categorical(p, q), cfg);
  }
  return total / static_cast<double>(groups.size());
}

std::vector<double> surrogate_gradient(std::span<const double> weights,
                                       std::span<const double> old_weights,
                                       std::span<const double> reference_weights,
                                       std::span<const ScoredGroup> groups, const GrpoConfig& cfg) {
  if (groups.empty()) throw InvalidInput("surrogate needs at least one group");
  cfg.validate();
  std::vector<double> grad(kPolicyParameters, 0.0);
  for (const ScoredGroup& g : groups) {
    const SceneDistribution cur = distribution(weights, g.scene);
    const std::vector<double> lp_old = action_log_probabilities(old_weights, g.scene);
    const std::vector<double> lq = action_log_probabilities(reference_weights, g.scene);
    const std::size_t actions = cur.probs.size();
    const double* f = cur.features.data();

    // Expected feature vector under the current policy.
    std::vector<double> mean_f(kPolicyParameters, 0.0);
    for (std::size_t a = 0; a < actions; ++a) {
      for (std::size_t k = 0; k < kPolicyParameters; ++k) {
        mean_f[k] += cur.probs[a] * f[a * kPolicyParameters + k];
      }
    }

    std::vector<double> scene_grad(kPolicyParameters, 0.0);
    const double inv_n = 1.0 / static_cast<double>(g.actions.size());
    for (std::size_t i = 0; i < g.actions.size(); ++i) {
      const std::size_t a = g.actions[i];
      const double ratio = std::exp(cur.log_probs[a] - lp_old[a]);
      const double coeff = inv_n * ratio * g.advantages[i];
      for (std::size_t k = 0; k < kPolicyParameters; ++k) {
        scene_grad[k] += coeff * (f[a * kPolicyParameters + k] - mean_f[k]);
      }
    }

    // d KL(p||q) / d score_a = p_a (log p_a - log q_a - KL).
    double kl = 0.0;
    for (std::size_t a = 0; a < actions; ++a) {
      if (cur.probs[a] > 0.0) kl += cur.probs[a] * (cur.log_probs[a] - lq[a]);
    }
    for (std::size_t a = 0; a < actions; ++a) {
      if (cur.probs[a] == 0.0) continue;
      const double ds = cur.probs[a] * (cur.log_probs[a] - lq[a] - kl);
      for (std::size_t k = 0; k < kPolicyParameters; ++k) {
        scene_grad[k] -= cfg.kl_beta * ds * f[a * kPolicyParameters + k];
      }
    }
    for (std::size_t k = 0; k < kPolicyParameters; ++k) grad[k] += scene_grad[k];
  }
  for (double& x : grad) x /= static_cast<double>(groups.size());
  return grad;
}

void TrainConfig::validate() const {
  reward.validate();
  grpo.validate();
  if (reward.group_size < 2) throw InvalidInput("group size must be >= 2");
  if (steps < 1) throw InvalidInput("steps must be >= 1");
  if (steps > reward.total_steps) {
    throw InvalidInput("steps (" + std::to_string(steps) + ") exceed total_steps T (" +
                       std::to_string(reward.total_steps) + ")");
  }
  if (scenes_per_step < 1) throw InvalidInput("scenes_per_step must be >= 1");
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw InvalidInput("learning_rate must be finite and >= 0");
  }
  if (levels.empty()) throw InvalidInput("train config needs at least one level");
  if (eval_scenes < 1) throw InvalidInput("eval_scenes must be >= 1");
  if (threads < 1) throw InvalidInput("threads must be >= 1");
}

void write_jsonl(std::ostream& os, const TrainLog& log) {
  for (const TrainRecord& r : log.records) {
    nlohmann::json j{{"step", r.step},
                     {"mean_reward", r.mean_reward},
                     {"mean_iou", r.mean_iou},
                     {"kl", r.kl},
                     {"surrogate", r.surrogate},
                     {"tau_iou_at_mean_s", r.tau_iou_at_mean_s},
                     {"hard_group_fraction", r.hard_group_fraction}};
    os << j.dump() << '\n';
  }
  if (log.abort_reason) {
    os << nlohmann::json{{"aborted", true}, {"reason", *log.abort_reason}}.dump() << '\n';
  }
}

void write_csv(std::ostream& os, const TrainLog& log) {
  os << "step,mean_reward,mean_iou,kl,surrogate,tau_iou_at_mean_s,hard_group_fraction\n";
  for (const TrainRecord& r : log.records) {
    // nlohmann's number formatting is round-trip exact and locale independent.
    os << r.step << ',' << nlohmann::json(r.mean_reward).dump() << ','
       << nlohmann::json(r.mean_iou).dump() << ',' << nlohmann::json(r.kl).dump() << ','
       << nlohmann::json(r.surrogate).dump() << ',' << nlohmann::json(r.tau_iou_at_mean_s).dump()
       << ',' << nlohmann::json(r.hard_group_fraction).dump() << '\n';
  }
}

std::vector<SceneSpec> held_out_scenes(const TrainConfig& cfg) {
  const std::vector<Level> levels = levels_or_throw(cfg);
  std::vector<SceneSpec> scenes;
  scenes.reserve(static_cast<std::size_t>(cfg.eval_scenes));
  for (int i = 0; i < cfg.eval_scenes; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    scenes.push_back(make_scene(mix_seed(mix_seed(cfg.seed, kEvalStream), idx),
                                levels[idx % levels.size()]));
  }
  return scenes;
}

EvalSummary evaluate_greedy(std::span<const double> weights, std::span<const SceneSpec> scenes) {
  EvalSummary s;
  s.scenes = scenes.size();
  std::size_t grounded = 0;
  std::size_t absent = 0;
  std::size_t precise = 0;
  std::size_t abstained = 0;
  double iou_sum = 0.0;
  for (const SceneSpec& scene : scenes) {
    const std::vector<double> scores = action_scores(weights, scene);
    const auto best = static_cast<std::size_t>(
        std::distance(scores.begin(), std::max_element(scores.begin(), scores.end())));
    const bool abstain = best == abstain_action(scene);
    if (auto gt = scene.target_box()) {
      ++grounded;
      const double v = abstain ? 0.0 : iou(scene.candidates[best].box, *gt);
      iou_sum += v;
      if (v >= 0.8) ++precise;
    } else {
      ++absent;
      if (abstain) ++abstained;
    }
  }
  if (grounded > 0) {
    s.mean_iou = iou_sum / static_cast<double>(grounded);
    s.fraction_iou_ge_0_8 = static_cast<double>(precise) / static_cast<double>(grounded);
  }
  if (absent > 0) s.abstain_accuracy = static_cast<double>(abstained) / static_cast<double>(absent);
  return s;
}

double max_total_variation(const PolicyState& policy, std::span<const SceneSpec> scenes) {
  double worst = 0.0;
  for (const SceneSpec& scene : scenes) {
    const std::vector<double> p = action_probabilities(policy.weights(), scene);
    const std::vector<double> q = action_probabilities(policy.reference_weights(), scene);
    double tv = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) tv += std::abs(p[a] - q[a]);
    worst = std::max(worst, 0.5 * tv);
  }
  return worst;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const std::vector<Level> levels = cfg.levels;
  const std::vector<SceneSpec> eval_set = held_out_scenes(cfg);

  double s_sum = 0.0;
  std::size_t s_count = 0;
  for (const SceneSpec& s : eval_set) {
    if (s.target) {
      s_sum += s.difficulty.target_area_ratio;
      ++s_count;
    }
  }
  const double mean_s = s_count > 0 ? s_sum / static_cast<double>(s_count) : 1.0;

  TrainResult result;
  const auto n = cfg.reward.group_size;
  const auto scenes_per_step = static_cast<std::size_t>(cfg.scenes_per_step);

  struct SceneOutcome {
    ScoredGroup group;
    double reward_sum = 0.0;
    double iou_sum = 0.0;
    bool grounded = false;
    bool hard = false;
  };

  for (std::int64_t t = 0; t < cfg.steps; ++t) {
    std::vector<SceneOutcome> outcomes(scenes_per_step);
    const std::uint64_t step_seed = mix_seed(mix_seed(cfg.seed, kTrainStream), static_cast<std::uint64_t>(t));
    const double tau_q = quality_threshold(t, cfg.reward);

    parallel_for(scenes_per_step, cfg.threads, [&](std::size_t i) {
      const std::uint64_t scene_seed = mix_seed(step_seed, i);
      const std::size_t global = static_cast<std::size_t>(t) * scenes_per_step + i;
      SceneOutcome& out = outcomes[i];
      out.group.scene = make_scene(scene_seed, levels[global % levels.size()]);
      const RolloutResult roll =
          rollout_actions(result.policy, out.group.scene, n, mix_seed(scene_seed, kRolloutStream));
      const auto breakdown =
          score_group(roll.responses, out.group.scene.target_box(), out.group.scene.dims, t, cfg.reward);
      std::vector<double> totals;
      int k = 0;
      for (const auto& b : breakdown) {
        totals.push_back(b.total);
        out.reward_sum += b.total;
        out.iou_sum += b.iou_value;
        k += b.dyiou;
      }
      out.grounded = out.group.scene.target.has_value();
      out.hard = static_cast<double>(k) < tau_q;
      out.group.actions = roll.actions;
      out.group.advantages = advantages(totals, cfg.grpo.epsilon_std);
    });

    std::vector<ScoredGroup> groups;
    groups.reserve(scenes_per_step);
    TrainRecord rec;
    rec.step = t;
    double reward_sum = 0.0;
    double iou_sum = 0.0;
    std::size_t iou_count = 0;
    std::size_t hard = 0;
    double kl_sum = 0.0;
    for (SceneOutcome& o : outcomes) {
      reward_sum += o.reward_sum;
      if (o.grounded) {
        iou_sum += o.iou_sum;
        iou_count += static_cast<std::size_t>(n);
      }
      if (o.hard) ++hard;
      kl_sum += kl_categorical(action_probabilities(result.policy.weights(), o.group.scene),
                               action_probabilities(result.policy.reference_weights(), o.group.scene));
      groups.push_back(std::move(o.group));
    }
    rec.mean_reward = reward_sum / static_cast<double>(scenes_per_step * static_cast<std::size_t>(n));
    rec.mean_iou = iou_count > 0 ? iou_sum / static_cast<double>(iou_count) : 0.0;
    rec.kl = kl_sum / static_cast<double>(scenes_per_step);
    rec.hard_group_fraction = static_cast<double>(hard) / static_cast<double>(scenes_per_step);
    rec.tau_iou_at_mean_s = effective_threshold(t, mean_s, cfg.reward);

    const std::vector<double> w(result.policy.weights().begin(), result.policy.weights().end());
    rec.surrogate =
        surrogate_objective(w, w, result.policy.reference_weights(), groups, cfg.grpo);
    const std::vector<double> grad =
        surrogate_gradient(w, w, result.policy.reference_weights(), groups, cfg.grpo);

    if (!std::all_of(grad.begin(), grad.end(), [](double g) { return std::isfinite(g); })) {
      result.log.abort_reason = "non-finite gradient at step " + std::to_string(t);
      break;
    }
    auto weights = result.policy.weights();
    for (std::size_t k = 0; k < kPolicyParameters; ++k) weights[k] += cfg.learning_rate * grad[k];
    if (!std::all_of(weights.begin(), weights.end(), [](double x) { return std::isfinite(x); })) {
      result.log.abort_reason = "non-finite policy weights after step " + std::to_string(t);
      result.log.records.push_back(rec);
      break;
    }
    result.log.records.push_back(rec);
  }

  result.held_out = evaluate_greedy(result.policy.weights(), eval_set);
  return result;
}

ScheduleComparison compare_schedules(const TrainConfig& cfg) {
  TrainConfig fixed = cfg;
  fixed.reward.threshold_mode = ThresholdMode::kFixed;
  TrainConfig dynamic = cfg;
  dynamic.reward.threshold_mode = ThresholdMode::kDynamic;
  return ScheduleComparison{train(fixed), train(dynamic)};
}

}  // namespace refrec
